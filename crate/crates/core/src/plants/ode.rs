use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dynamics, InputSource, Trajectory};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

/// One explicit Euler step with the input held at `u`.
pub fn euler_step<D: Dynamics + ?Sized>(sys: &D, x: &mut [f64], u: &[f64], dt: f64) {
    let mut k = vec![0.0; x.len()];
    sys.rhs(x, u, &mut k);
    for (xi, ki) in x.iter_mut().zip(&k) {
        *xi += dt * ki;
    }
}

/// One classical Runge-Kutta step with the input held at `u`.
pub fn rk4_step<D: Dynamics + ?Sized>(sys: &D, x: &mut [f64], u: &[f64], dt: f64) {
    rk4_step_varying(sys, x, &[u, u, u], dt)
}

/// RK4 with the input sampled at `t`, `t + dt/2` and `t + dt`.
fn rk4_step_varying<D: Dynamics + ?Sized>(sys: &D, x: &mut [f64], u: &[&[f64]; 3], dt: f64) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    sys.rhs(x, u[0], &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    sys.rhs(&tmp, u[1], &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    sys.rhs(&tmp, u[1], &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    sys.rhs(&tmp, u[2], &mut k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `n_steps` steps from `x0`, recording `n_steps + 1` states.
///
/// The derivative matrix holds the right-hand side evaluated at each stored state.
pub fn integrate_ode<D: Dynamics + ?Sized, U: InputSource + ?Sized>(
    sys: &D,
    x0: &[f64],
    input: &U,
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    if n_steps < 1 {
        return Err(invalid("need at least one step"));
    }
    let j = sys.state_dim();
    let s = sys.input_dim();
    if x0.len() != j {
        return Err(invalid(format!("initial state has {} entries, system has {j}", x0.len())));
    }
    if input.dim() != s {
        return Err(invalid(format!("input source provides {} channels, system takes {s}", input.dim())));
    }
    let n = n_steps + 1;
    let mut xs = DMatrix::zeros(n, j);
    let mut us = DMatrix::zeros(n, s);
    let mut ds = DMatrix::zeros(n, j);
    let mut times = Vec::with_capacity(n);
    let mut x = x0.to_vec();
    let mut u0 = vec![0.0; s];
    let mut um = vec![0.0; s];
    let mut u1 = vec![0.0; s];
    let mut dx = vec![0.0; j];
    for step in 0..n {
        let t = step as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        input.input(t, &mut u0);
        sys.rhs(&x, &u0, &mut dx);
        times.push(t);
        for c in 0..j {
            xs[(step, c)] = x[c];
            ds[(step, c)] = dx[c];
        }
        for c in 0..s {
            us[(step, c)] = u0[c];
        }
        if step + 1 == n {
            break;
        }
        match method {
            Method::Euler => {
                for c in 0..j {
                    x[c] += dt * dx[c];
                }
            }
            Method::Rk4 => {
                input.input(t + 0.5 * dt, &mut um);
                input.input(t + dt, &mut u1);
                rk4_step_varying(sys, &mut x, &[&u0, &um, &u1], dt);
            }
        }
    }
    Trajectory::new(times, xs, us, Some(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::FnDynamics;

    fn decay() -> FnDynamics<impl Fn(&[f64], &[f64], &mut [f64]) + Sync> {
        FnDynamics { states: 1, inputs: 0, f: |x: &[f64], _u: &[f64], dx: &mut [f64]| dx[0] = -x[0] }
    }

    #[test]
    fn zero_rhs_is_constant() {
        let sys = FnDynamics { states: 2, inputs: 0, f: |_x: &[f64], _u: &[f64], dx: &mut [f64]| dx.fill(0.0) };
        let tr = integrate_ode(&sys, &[1.5, -2.0], &(), 0.1, 20, Method::Rk4).unwrap();
        assert_eq!(tr.len(), 21);
        assert!(tr.x.row_iter().all(|r| r[0] == 1.5 && r[1] == -2.0));
    }

    #[test]
    fn rk4_exponential_decay() {
        let tr = integrate_ode(&decay(), &[1.0], &(), 0.01, 100, Method::Rk4).unwrap();
        assert!((tr.x[(100, 0)] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |dt: f64, n: usize| {
            let tr = integrate_ode(&decay(), &[1.0], &(), dt, n, Method::Rk4).unwrap();
            (tr.x[(n, 0)] - (-1f64).exp()).abs()
        };
        let ratio = err(0.1, 10) / err(0.05, 20);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn divergence_reports_step() {
        let sys = FnDynamics { states: 1, inputs: 0, f: |x: &[f64], _u: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0] };
        match integrate_ode(&sys, &[1.0], &(), 0.5, 100, Method::Euler) {
            Err(Error::Divergence { step }) => assert!(step > 1),
            other => panic!("{other:?}"),
        }
    }
}
