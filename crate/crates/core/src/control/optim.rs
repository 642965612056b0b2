//! Projected quasi-Newton minimization over a box, with finite-difference gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxOptions {
    /// Stop when the ∞-norm of the projected gradient falls to this value.
    pub tol: f64,
    pub max_iters: usize,
    /// Finite-difference step as a fraction of the box width.
    pub fd_step: f64,
    /// Length of the first trial step as a fraction of the smallest box width.
    pub initial_step: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 100, fd_step: 1e-6, initial_step: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// The projected-gradient test was met.
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
    pub projected_gradient: f64,
}

struct Problem<'a, F> {
    f: &'a F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> Option<f64>> Problem<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        (self.f)(x).filter(|v| v.is_finite())
    }

    fn width(&self, i: usize) -> f64 {
        let w = self.upper[i] - self.lower[i];
        if w.is_finite() && w > 0.0 { w } else { 1.0 }
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Central differences where the probes fit in the box, one-sided otherwise.
    fn gradient(&mut self, x: &[f64], fx: f64, h_rel: f64) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        let mut probe = x.to_vec();
        for i in 0..n {
            let h = h_rel * self.width(i);
            let can_up = x[i] + h <= self.upper[i];
            let can_down = x[i] - h >= self.lower[i];
            let mut at = |v: f64, p: &mut Self| {
                probe[i] = v;
                let r = p.eval(&probe);
                probe[i] = x[i];
                r
            };
            g[i] = if can_up && can_down {
                match (at(x[i] + h, self), at(x[i] - h, self)) {
                    (Some(a), Some(b)) => (a - b) / (2.0 * h),
                    (Some(a), None) => (a - fx) / h,
                    (None, Some(b)) => (fx - b) / h,
                    (None, None) => 0.0,
                }
            } else if can_up {
                at(x[i] + h, self).map_or(0.0, |a| (a - fx) / h)
            } else if can_down {
                at(x[i] - h, self).map_or(0.0, |b| (fx - b) / h)
            } else {
                0.0
            };
        }
        g
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &DVector<f64>) -> f64 {
        (0..x.len())
            .map(|i| ((x[i] - g[i]).clamp(self.lower[i], self.upper[i]) - x[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Minimizes `f` over `lower ≤ x ≤ upper`. `f` returns `None` where it cannot be evaluated
/// (for example a diverging model rollout); such trial points are rejected and the step shrunk.
///
/// Accepted steps satisfy an Armijo decrease, so the objective never increases.
pub fn minimize_box<F: Fn(&[f64]) -> Option<f64>>(
    f: &F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BoxOptions,
) -> Result<BoxResult> {
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(invalid("bounds must match the variable count"));
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return Err(invalid("lower bounds must not exceed upper bounds"));
    }
    let mut p = Problem { f, lower, upper, evaluations: 0 };
    let mut x = x0.to_vec();
    p.project(&mut x);
    let mut fx = p
        .eval(&x)
        .ok_or_else(|| Error::Controller("objective cannot be evaluated at the starting point".into()))?;
    let mut g = p.gradient(&x, fx, opts.fd_step);
    let mut history = vec![fx];
    let min_width = (0..n).map(|i| p.width(i)).fold(f64::INFINITY, f64::min);
    let scale0 = if min_width.is_finite() { opts.initial_step * min_width } else { opts.initial_step };
    let gmax = g.amax().max(1e-300);
    let mut h_inv = DMatrix::identity(n, n) * (scale0 / gmax);
    let mut fresh = true;
    let mut iterations = 0;
    let mut pg = p.projected_gradient_norm(&x, &g);
    let mut converged = pg <= opts.tol;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let eps = 1e-12;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] + eps * p.width(i) && g[i] > 0.0) || (x[i] >= upper[i] - eps * p.width(i) && g[i] < 0.0)))
            .collect();

        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = DVector::zeros(n);
            for i in 0..n {
                if free[i] {
                    d[i] = -(0..n).filter(|&j| free[j]).map(|j| h_inv[(i, j)] * g[j]).sum::<f64>();
                }
            }
            if g.dot(&d) >= 0.0 {
                h_inv = DMatrix::identity(n, n) * (scale0 / g.amax().max(1e-300));
                fresh = true;
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut xt: Vec<f64> = (0..n).map(|i| x[i] + alpha * d[i]).collect();
                p.project(&mut xt);
                let decrease: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
                if decrease < 0.0 {
                    if let Some(ft) = p.eval(&xt) {
                        if ft <= fx + 1e-4 * decrease {
                            accepted = Some((xt, ft));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            // Retry once along the scaled steepest descent direction.
            h_inv = DMatrix::identity(n, n) * (scale0 / g.amax().max(1e-300));
            fresh = true;
        }
        let Some((xn, fnew)) = accepted else { break };

        let gn = p.gradient(&xn, fnew, opts.fd_step);
        let s = DVector::from_iterator(n, (0..n).map(|i| xn[i] - x[i]));
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                h_inv = DMatrix::identity(n, n) * (sy / y.norm_squared());
                fresh = false;
            }
            let rho = 1.0 / sy;
            let i_n = DMatrix::<f64>::identity(n, n);
            let left = &i_n - &s * y.transpose() * rho;
            let right = &i_n - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        pg = p.projected_gradient_norm(&x, &g);
        converged = pg <= opts.tol;
    }
    Ok(BoxResult { x, value: fx, iterations, evaluations: p.evaluations, converged, history, projected_gradient: pg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rosenbrock_interior_minimum() {
        let f = |x: &[f64]| Some((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = minimize_box(&f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &BoxOptions { max_iters: 500, tol: 1e-6, ..Default::default() }).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 2e-3, "{:?}", r.x);
    }

    #[test]
    fn active_bound() {
        let f = |x: &[f64]| Some((x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2));
        let r = minimize_box(&f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &BoxOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!((r.x[1] + 0.5).abs() < 1e-5);
        assert!(r.converged);
    }

    #[test]
    fn undefined_region_is_avoided() {
        let f = |x: &[f64]| if x[0] > 0.5 { None } else { Some((x[0] - 2.0).powi(2)) };
        let r = minimize_box(&f, &[0.0], &[-10.0], &[10.0], &BoxOptions::default()).unwrap();
        assert!(r.x[0] <= 0.5 && r.x[0] > 0.3);
    }

    #[test]
    fn start_must_be_evaluable() {
        let f = |_: &[f64]| None;
        assert!(minimize_box(&f, &[0.0], &[-1.0], &[1.0], &BoxOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_feasible(c in proptest::collection::vec(-3.0f64..3.0, 3), x0 in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let f = |x: &[f64]| Some((0..3).map(|i| (x[i] - c[i]).powi(2) * (i + 1) as f64).sum::<f64>() + (x[0] * x[1]).sin());
            let r = minimize_box(&f, &x0, &[-1.0; 3], &[1.0; 3], &BoxOptions::default()).unwrap();
            prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(r.x.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
