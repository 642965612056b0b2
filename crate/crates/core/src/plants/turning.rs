use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Single-degree-of-freedom orthogonal turning with regenerative chip thickness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurningParams {
    /// Modal mass, kg.
    pub m: f64,
    /// Damping, N·s/m.
    pub c: f64,
    /// Stiffness, N/m.
    pub k: f64,
    /// Specific cutting force, N/m².
    pub ks: f64,
    /// Mean chip thickness, m.
    pub hm: f64,
    /// Force angle, rad.
    pub beta_force: f64,
    pub steps_per_rev: usize,
    pub n_rev: usize,
    /// |y| above this (m) stops the simulation.
    pub blowup: f64,
}

impl Default for TurningParams {
    fn default() -> Self {
        Self {
            m: 3.17,
            c: 795.77,
            k: 2e7,
            ks: 1.5e9,
            hm: 1e-4,
            beta_force: 68f64.to_radians(),
            steps_per_rev: 200,
            n_rev: 100,
            blowup: 1.0,
        }
    }
}

impl TurningParams {
    pub fn natural_frequency_hz(&self) -> f64 {
        (self.k / self.m).sqrt() / (2.0 * PI)
    }

    pub fn damping_ratio(&self) -> f64 {
        self.c / (2.0 * (self.k * self.m).sqrt())
    }

    /// `K_s cos β`, the force per unit width per unit chip thickness.
    pub fn force_gain(&self) -> f64 {
        self.ks * self.beta_force.cos()
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.m, self.c, self.k, self.ks, self.hm, self.beta_force, self.blowup];
        if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(invalid("turning parameters must be positive and finite"));
        }
        if self.steps_per_rev < 2 {
            return Err(invalid("need at least 2 steps per revolution"));
        }
        if self.n_rev < 1 {
            return Err(invalid("need at least one revolution"));
        }
        Ok(())
    }
}

/// Fixed-length delay with zero initial history.
#[derive(Clone, Debug)]
pub struct DelayLine {
    buf: Vec<f64>,
    head: usize,
}

impl DelayLine {
    pub fn new(len: usize) -> Self {
        Self::filled(len, 0.0)
    }

    /// A delay line whose history is the constant `value`.
    pub fn filled(len: usize, value: f64) -> Self {
        assert!(len >= 1, "delay length must be positive");
        Self { buf: vec![value; len], head: 0 }
    }

    /// The value pushed `len` calls ago.
    #[inline]
    pub fn delayed(&self) -> f64 {
        self.buf[self.head]
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.buf[self.head] = v;
        self.head += 1;
        if self.head == self.buf.len() {
            self.head = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningTrajectory {
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub yddot: Vec<f64>,
    /// Cutting force F_n.
    pub force: Vec<f64>,
    /// `y(t − τ) − y(t)`.
    pub delay: Vec<f64>,
    /// Spindle speed, rev/s.
    pub omega: f64,
    /// Chip width, m.
    pub b: f64,
    pub steps_per_rev: usize,
    pub dt: f64,
    /// The run was truncated because |y| exceeded the blow-up bound.
    pub diverged: bool,
}

impl TurningTrajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Displacement sampled once per revolution.
    pub fn once_per_rev(&self) -> Vec<f64> {
        self.y.iter().step_by(self.steps_per_rev).copied().collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.dt).collect()
    }
}

/// Time-domain simulation from rest with zero delay history.
pub fn simulate_turning(p: &TurningParams, omega: f64, b: f64) -> Result<TurningTrajectory> {
    simulate_turning_from(p, omega, b, 0.0, 0.0)
}

/// Time-domain simulation starting from displacement `y0` and velocity `v0`.
///
/// Semi-implicit Euler: the velocity is advanced with the current acceleration and
/// the displacement with the new velocity. The delay history is zero.
pub fn simulate_turning_from(p: &TurningParams, omega: f64, b: f64, y0: f64, v0: f64) -> Result<TurningTrajectory> {
    p.validate()?;
    if !(omega > 0.0) {
        return Err(invalid("spindle speed must be positive"));
    }
    if !(b >= 0.0) {
        return Err(invalid("chip width must be non-negative"));
    }
    let n_tau = p.steps_per_rev;
    let dt = 1.0 / (omega * n_tau as f64);
    let n = n_tau * p.n_rev;
    let gain = p.force_gain() * b;
    let mut out = TurningTrajectory {
        y: Vec::with_capacity(n),
        ydot: Vec::with_capacity(n),
        yddot: Vec::with_capacity(n),
        force: Vec::with_capacity(n),
        delay: Vec::with_capacity(n),
        omega,
        b,
        steps_per_rev: n_tau,
        dt,
        diverged: false,
    };
    let mut line = DelayLine::new(n_tau);
    let (mut y, mut v) = (y0, v0);
    for _ in 0..n {
        if y.abs() > p.blowup || !y.is_finite() {
            out.diverged = true;
            break;
        }
        let delay = line.delayed() - y;
        let f = gain * (p.hm + delay);
        let a = (f - p.c * v - p.k * y) / p.m;
        out.y.push(y);
        out.ydot.push(v);
        out.yddot.push(a);
        out.force.push(f);
        out.delay.push(delay);
        line.push(y);
        v += a * dt;
        y += v * dt;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        let p = TurningParams::default();
        assert!((p.natural_frequency_hz() - 399.8).abs() < 0.5);
        assert!((p.damping_ratio() - 0.05).abs() < 5e-4);
    }

    #[test]
    fn training_geometry() {
        let p = TurningParams::default();
        let tr = simulate_turning(&p, 400.0, 0.002).unwrap();
        assert!((tr.dt - 1.25e-5).abs() < 1e-18);
        assert_eq!(tr.len(), 20_000);
    }

    #[test]
    fn free_response_from_rest_is_zero() {
        let tr = simulate_turning(&TurningParams::default(), 600.0, 0.0).unwrap();
        assert!(tr.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delay_column_matches_buffer() {
        let p = TurningParams::default();
        let tr = simulate_turning(&p, 500.0, 0.003).unwrap();
        let n = p.steps_per_rev;
        for i in 0..tr.len() {
            let hist = if i >= n { tr.y[i - n] } else { 0.0 };
            assert_eq!(tr.delay[i], hist - tr.y[i]);
        }
    }

    #[test]
    fn log_decrement_matches_damping() {
        let p = TurningParams { n_rev: 40, ..Default::default() };
        let tr = simulate_turning_from(&p, 400.0, 0.0, 1e-5, 0.0).unwrap();
        let peaks: Vec<f64> = (1..tr.len() - 1)
            .filter(|&i| tr.y[i] > tr.y[i - 1] && tr.y[i] >= tr.y[i + 1] && tr.y[i] > 0.0)
            .map(|i| tr.y[i])
            .collect();
        assert!(peaks.len() > 10);
        let m = 10;
        let delta = (peaks[0] / peaks[m]).ln() / m as f64;
        let zeta = delta / (4.0 * PI * PI + delta * delta).sqrt();
        assert!((zeta / p.damping_ratio() - 1.0).abs() < 0.02, "{zeta}");
    }

    #[test]
    fn delay_line_order() {
        let mut d = DelayLine::new(3);
        let mut out = Vec::new();
        for v in 1..=6 {
            out.push(d.delayed());
            d.push(v as f64);
        }
        assert_eq!(out, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
    }
}
