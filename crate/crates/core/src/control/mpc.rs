//! Receding-horizon control with an identified continuous-time model.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::optim::{minimize_box, BoxOptions};
use crate::error::{invalid, Error, Result};
use crate::plants::{rk4_step, Dynamics, LorenzParams, Trajectory};

/// Reference trajectory `r(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    Constant { value: Vec<f64> },
    /// `offset + amplitude · sin(ωt + phase)`, per state.
    Sinusoid { offset: Vec<f64>, amplitude: Vec<f64>, angular_frequency: f64, phase: f64 },
}

impl Reference {
    pub fn dim(&self) -> usize {
        match self {
            Reference::Constant { value } => value.len(),
            Reference::Sinusoid { offset, .. } => offset.len(),
        }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            Reference::Constant { value } => value.clone(),
            Reference::Sinusoid { offset, amplitude, angular_frequency, phase } => {
                let s = (angular_frequency * t + phase).sin();
                offset.iter().zip(amplitude).map(|(o, a)| o + a * s).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    /// State weight Q, rows.
    pub q_weight: Vec<Vec<f64>>,
    /// Input weight R, rows.
    pub r_weight: Vec<Vec<f64>>,
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
    pub dt_sys: f64,
    pub dt_mpc: f64,
    /// Maximum number of closed-loop control steps.
    pub k_max: usize,
    pub reference: Reference,
    pub optimizer_tol: f64,
    pub optimizer_max_iters: usize,
}

fn diag(v: &[f64]) -> Vec<Vec<f64>> {
    (0..v.len()).map(|i| (0..v.len()).map(|j| if i == j { v[i] } else { 0.0 }).collect()).collect()
}

impl MpcConfig {
    /// Regulation of the Lorenz system to `(−√72, −√72, 27)`.
    pub fn lorenz_setpoint() -> Self {
        let fp = LorenzParams::default().fixed_points()[1];
        Self {
            horizon: 10,
            q_weight: diag(&[1.0, 1.0, 1.0]),
            r_weight: diag(&[0.001]),
            u_lower: vec![-50.0],
            u_upper: vec![50.0],
            dt_sys: 0.001,
            dt_mpc: 0.01,
            k_max: 100_000,
            reference: Reference::Constant { value: fp.to_vec() },
            optimizer_tol: 1e-6,
            optimizer_max_iters: 50,
        }
    }

    /// Tracking of `x₁ → 2 sin(7t)`.
    pub fn lorenz_tracking() -> Self {
        Self {
            q_weight: diag(&[500.0, 0.0, 0.0]),
            u_lower: vec![-200.0],
            u_upper: vec![200.0],
            reference: Reference::Sinusoid {
                offset: vec![0.0; 3],
                amplitude: vec![2.0, 0.0, 0.0],
                angular_frequency: 7.0,
                phase: 0.0,
            },
            ..Self::lorenz_setpoint()
        }
    }

    /// Plant steps per control update.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.dt_sys > 0.0) || !(self.dt_mpc > 0.0) {
            return Err(invalid("time steps must be positive"));
        }
        let ratio = self.dt_mpc / self.dt_sys;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
            return Err(invalid(format!("dt_mpc / dt_sys = {ratio} is not a positive integer")));
        }
        Ok(n as usize)
    }

    fn matrices(&self, j: usize, s: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let to_mat = |rows: &Vec<Vec<f64>>, n: usize, name: &str| -> Result<DMatrix<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(invalid(format!("{name} must be {n}×{n}")));
            }
            let m = DMatrix::from_fn(n, n, |a, b| rows[a][b]);
            if (0..n).any(|a| (0..n).any(|b| (m[(a, b)] - m[(b, a)]).abs() > 1e-12 * (1.0 + m[(a, b)].abs()))) {
                return Err(invalid(format!("{name} must be symmetric")));
            }
            if m.clone().symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
                return Err(invalid(format!("{name} must be positive semi-definite")));
            }
            Ok(m)
        };
        Ok((to_mat(&self.q_weight, j, "Q")?, to_mat(&self.r_weight, s, "R")?))
    }

    pub fn validate(&self, j: usize, s: usize) -> Result<()> {
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        self.substeps()?;
        self.matrices(j, s)?;
        if self.u_lower.len() != s || self.u_upper.len() != s {
            return Err(invalid(format!("input bounds must have {s} entries")));
        }
        if (0..s).any(|i| !(self.u_lower[i] <= self.u_upper[i])) {
            return Err(invalid("input bounds are not ordered"));
        }
        if self.reference.dim() != j {
            return Err(invalid(format!("reference has {} entries, state has {j}", self.reference.dim())));
        }
        Ok(())
    }
}

/// An optimized open-loop input sequence and its predicted states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    /// H rows of S inputs.
    pub controls: Vec<Vec<f64>>,
    /// H + 1 predicted states, starting with the measured state.
    pub predicted_states: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective of the warm start, when one was supplied.
    pub warm_start_objective: Option<f64>,
}

impl ControlSequence {
    /// Drops the first stage and repeats the last one.
    pub fn shifted(&self) -> Vec<Vec<f64>> {
        let mut c: Vec<Vec<f64>> = self.controls.iter().skip(1).cloned().collect();
        if let Some(last) = self.controls.last() {
            c.push(last.clone());
        }
        c
    }
}

const BLOWUP: f64 = 1e8;

struct Horizon<'a, M: Dynamics + ?Sized> {
    model: &'a M,
    cfg: &'a MpcConfig,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    refs: Vec<DVector<f64>>,
    x0: Vec<f64>,
    substeps: usize,
}

impl<M: Dynamics + ?Sized> Horizon<'_, M> {
    fn rollout(&self, u: &[f64]) -> Option<(f64, Vec<Vec<f64>>)> {
        let s = self.model.input_dim();
        let mut x = self.x0.clone();
        let mut states = vec![x.clone()];
        let mut cost = 0.0;
        for i in 0..self.cfg.horizon {
            let ui = &u[i * s..(i + 1) * s];
            for _ in 0..self.substeps {
                rk4_step(self.model, &mut x, ui, self.cfg.dt_sys);
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                return None;
            }
            let e = DVector::from_column_slice(&x) - &self.refs[i];
            let uv = DVector::from_column_slice(ui);
            cost += (e.transpose() * &self.q * &e)[0] + (uv.transpose() * &self.r * &uv)[0];
            states.push(x.clone());
        }
        Some((cost, states))
    }
}

/// Optimizes the next `H` inputs from state `x_k` at time `t_k`.
pub fn solve_horizon<M: Dynamics + ?Sized>(
    model: &M,
    x_k: &[f64],
    cfg: &MpcConfig,
    warm_start: Option<&[Vec<f64>]>,
    t_k: f64,
) -> Result<ControlSequence> {
    let j = model.state_dim();
    let s = model.input_dim();
    cfg.validate(j, s)?;
    if x_k.len() != j || x_k.iter().any(|v| !v.is_finite()) {
        return Err(invalid("state must be finite with one entry per model state"));
    }
    let (q, r) = cfg.matrices(j, s)?;
    let refs = (1..=cfg.horizon)
        .map(|i| DVector::from_vec(cfg.reference.at(t_k + i as f64 * cfg.dt_mpc)))
        .collect();
    let hz = Horizon { model, cfg, q, r, refs, x0: x_k.to_vec(), substeps: cfg.substeps()? };

    let h = cfg.horizon;
    let mid: Vec<f64> = (0..s).map(|i| 0.5 * (cfg.u_lower[i] + cfg.u_upper[i])).collect();
    let half: Vec<f64> = (0..s).map(|i| (0.5 * (cfg.u_upper[i] - cfg.u_lower[i])).max(1e-300)).collect();
    let to_u = |z: &[f64]| -> Vec<f64> { (0..h * s).map(|k| mid[k % s] + half[k % s] * z[k]).collect() };
    let objective = |z: &[f64]| hz.rollout(&to_u(z)).map(|(c, _)| c);

    let mut z0 = vec![0.0; h * s];
    let mut warm_value = None;
    if let Some(ws) = warm_start {
        if ws.len() == h && ws.iter().all(|r| r.len() == s) {
            for (i, row) in ws.iter().enumerate() {
                for c in 0..s {
                    z0[i * s + c] = ((row[c] - mid[c]) / half[c]).clamp(-1.0, 1.0);
                }
            }
            warm_value = objective(&z0);
        }
    }
    if warm_value.is_none() {
        // Try the box centre and a few uniform inputs; take the first that does not diverge.
        let candidates = [0.0, -0.5, 0.5, -1.0, 1.0];
        let found = candidates.iter().find(|&&c| objective(&vec![c; h * s]).is_some());
        match found {
            Some(&c) => z0 = vec![c; h * s],
            None => return Err(Error::Controller("model rollout diverges for every trial input".into())),
        }
    }
    let opts = BoxOptions { tol: cfg.optimizer_tol, max_iters: cfg.optimizer_max_iters, ..Default::default() };
    let res = minimize_box(&objective, &z0, &vec![-1.0; h * s], &vec![1.0; h * s], &opts)?;
    let u = to_u(&res.x);
    let (cost, states) = hz.rollout(&u).ok_or_else(|| Error::Controller("optimized rollout diverged".into()))?;
    Ok(ControlSequence {
        controls: u.chunks(s.max(1)).map(|c| c.to_vec()).take(h).collect(),
        predicted_states: states,
        objective: cost,
        iterations: res.iterations,
        warm_start_objective: warm_value,
    })
}

/// Closed-loop record on the plant time grid.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub trajectory: Trajectory,
    /// Reference at every plant sample.
    pub reference: DMatrix<f64>,
    /// Objective of the horizon solve governing each plant sample.
    pub objective: Vec<f64>,
    pub sequences: Vec<ControlSequence>,
    /// The plant left the finite range and the run was cut short.
    pub diverged: bool,
}

impl ClosedLoop {
    /// Writes `t, x_1.., r_1.., u_1.., objective`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let tr = &self.trajectory;
        let (j, s) = (tr.state_dim(), tr.input_dim());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=j).map(|i| format!("x_{i}")));
        header.extend((1..=j).map(|i| format!("r_{i}")));
        header.extend((1..=s).map(|i| format!("u_{i}")));
        header.push("objective".into());
        wr.write_record(&header)?;
        for k in 0..tr.len() {
            let mut row = vec![tr.times[k].to_string()];
            row.extend((0..j).map(|c| tr.x[(k, c)].to_string()));
            row.extend((0..j).map(|c| self.reference[(k, c)].to_string()));
            row.extend((0..s).map(|c| tr.u[(k, c)].to_string()));
            row.push(self.objective[k].to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Runs the controller against `plant` for `duration` time units (or `k_max` updates),
/// holding each first input over `dt_mpc / dt_sys` plant steps.
pub fn run_closed_loop<P: Dynamics + ?Sized, M: Dynamics + ?Sized>(
    plant: &P,
    model: &M,
    cfg: &MpcConfig,
    x0: &[f64],
    duration: f64,
) -> Result<ClosedLoop> {
    let j = plant.state_dim();
    let s = plant.input_dim();
    if model.state_dim() != j || model.input_dim() != s {
        return Err(invalid("plant and model dimensions differ"));
    }
    cfg.validate(j, s)?;
    let sub = cfg.substeps()?;
    let steps = ((duration / cfg.dt_mpc).round() as usize).min(cfg.k_max);
    if steps < 1 {
        return Err(invalid("duration must cover at least one control step"));
    }
    let mut x = x0.to_vec();
    let mut times = vec![0.0];
    let mut xs = vec![x.clone()];
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut objective = Vec::new();
    let mut sequences: Vec<ControlSequence> = Vec::new();
    let mut diverged = false;
    let mut warm: Option<Vec<Vec<f64>>> = None;
    'outer: for k in 0..steps {
        let t_k = k as f64 * cfg.dt_mpc;
        let seq = solve_horizon(model, &x, cfg, warm.as_deref(), t_k)?;
        let u = seq.controls[0].clone();
        for i in 0..sub {
            rk4_step(plant, &mut x, &u, cfg.dt_sys);
            us.push(u.clone());
            objective.push(seq.objective);
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                diverged = true;
                us.pop();
                objective.pop();
                break 'outer;
            }
            times.push((k * sub + i + 1) as f64 * cfg.dt_sys);
            xs.push(x.clone());
        }
        warm = Some(seq.shifted());
        sequences.push(seq);
    }
    // The final sample repeats the last applied input.
    us.push(us.last().cloned().unwrap_or_else(|| vec![0.0; s]));
    objective.push(objective.last().copied().unwrap_or(f64::NAN));
    let n = times.len();
    let xm = DMatrix::from_fn(n, j, |r, c| xs[r][c]);
    let um = DMatrix::from_fn(n, s, |r, c| us[r][c]);
    let reference = DMatrix::from_fn(n, j, |r, c| cfg.reference.at(times[r])[c]);
    let mut rhs = DMatrix::zeros(n, j);
    let mut dx = vec![0.0; j];
    for r in 0..n {
        plant.rhs(&xs[r], &us[r], &mut dx);
        for c in 0..j {
            rhs[(r, c)] = dx[c];
        }
    }
    let trajectory = Trajectory::new(times, xm, um, Some(rhs))?;
    Ok(ClosedLoop { trajectory, reference, objective, sequences, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::FnDynamics;

    fn integrator() -> FnDynamics<impl Fn(&[f64], &[f64], &mut [f64]) + Sync> {
        FnDynamics { states: 1, inputs: 1, f: |_x: &[f64], u: &[f64], dx: &mut [f64]| dx[0] = u[0] }
    }

    fn scalar_cfg(r: f64) -> MpcConfig {
        MpcConfig {
            horizon: 1,
            q_weight: vec![vec![1.0]],
            r_weight: vec![vec![r]],
            u_lower: vec![-50.0],
            u_upper: vec![50.0],
            dt_sys: 1.0,
            dt_mpc: 1.0,
            k_max: 100,
            reference: Reference::Constant { value: vec![1.0] },
            optimizer_tol: 1e-10,
            optimizer_max_iters: 100,
        }
    }

    #[test]
    fn one_step_reach() {
        let seq = solve_horizon(&integrator(), &[0.0], &scalar_cfg(0.0), None, 0.0).unwrap();
        assert!((seq.controls[0][0] - 1.0).abs() < 1e-5, "{:?}", seq.controls);
    }

    #[test]
    fn heavy_input_penalty() {
        let seq = solve_horizon(&integrator(), &[0.0], &scalar_cfg(1e9), None, 0.0).unwrap();
        assert!(seq.controls[0][0].abs() < 1e-3);
    }

    #[test]
    fn warm_start_never_worse() {
        let cfg = MpcConfig { horizon: 4, ..scalar_cfg(0.1) };
        let warm = vec![vec![0.3], vec![-0.2], vec![0.9], vec![0.0]];
        let seq = solve_horizon(&integrator(), &[0.5], &cfg, Some(&warm), 0.0).unwrap();
        assert!(seq.objective <= seq.warm_start_objective.unwrap());
        assert!(seq.controls.iter().all(|u| (-50.0..=50.0).contains(&u[0])));
    }

    #[test]
    fn substeps_must_be_integral() {
        let mut cfg = MpcConfig::lorenz_setpoint();
        assert_eq!(cfg.substeps().unwrap(), 10);
        cfg.dt_mpc = 0.0105;
        assert!(cfg.substeps().is_err());
    }

    #[test]
    fn rejects_indefinite_weights() {
        let mut cfg = MpcConfig::lorenz_setpoint();
        cfg.q_weight[0][0] = -1.0;
        assert!(cfg.validate(3, 1).is_err());
    }

    #[test]
    fn decaying_plant_needs_no_control() {
        let sys = FnDynamics { states: 1, inputs: 1, f: |x: &[f64], u: &[f64], dx: &mut [f64]| dx[0] = -x[0] + u[0] };
        let cfg = MpcConfig {
            horizon: 5,
            q_weight: vec![vec![1.0]],
            r_weight: vec![vec![1.0]],
            dt_sys: 0.01,
            dt_mpc: 0.1,
            reference: Reference::Constant { value: vec![0.0] },
            ..scalar_cfg(1.0)
        };
        let cl = run_closed_loop(&sys, &sys, &cfg, &[1.0], 3.0).unwrap();
        assert_eq!(cl.trajectory.len(), 301);
        assert!(cl.trajectory.u.iter().all(|u| u.abs() < 0.5));
        assert!(cl.trajectory.x[(300, 0)].abs() < 0.06);
        assert!(!cl.diverged);
        // Zero-order hold: ten identical inputs per update.
        for k in 0..30 {
            let block: Vec<f64> = (0..10).map(|i| cl.trajectory.u[(k * 10 + i, 0)]).collect();
            assert!(block.iter().all(|&v| v == block[0]));
        }
    }
}
