//! Once-per-revolution stability metric and model rollouts of the turning process.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::plants::DelayLine;
use crate::sysid::turning::TurningModel;

/// Mean squared difference of successive once-per-revolution samples over revolutions
/// `n0+1 ..= n0+nf`. Needs `n0 + nf + 1` samples.
pub fn stability_metric(samples: &[f64], n0: usize, nf: usize) -> Result<f64> {
    if nf == 0 {
        return Err(invalid("window must contain at least one revolution"));
    }
    if samples.len() < n0 + nf + 1 {
        return Err(invalid(format!("need {} once-per-revolution samples, have {}", n0 + nf + 1, samples.len())));
    }
    let sum: f64 = (n0 + 1..=n0 + nf).map(|i| (samples[i] - samples[i - 1]).powi(2)).sum();
    Ok(sum / nf as f64)
}

/// Initial condition of a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutStart {
    pub y: f64,
    pub v: f64,
    /// Displacement history before the start, held constant.
    pub history: f64,
}

impl RolloutStart {
    pub const REST: RolloutStart = RolloutStart { y: 0.0, v: 0.0, history: 0.0 };

    /// Continue from a carried state, with the history frozen at the carried displacement.
    pub fn carried(y: f64, v: f64) -> Self {
        Self { y, v, history: y }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// Displacement at the start of every revolution, plus the final state: `n_rev + 1` values.
    pub once_per_rev: Vec<f64>,
    pub terminal: (f64, f64),
    pub diverged: bool,
    /// Full displacement and velocity series when requested.
    pub series: Option<(Vec<f64>, Vec<f64>)>,
}

/// Semi-implicit Euler rollout of `m ÿ + c ẏ + k y = c₁ b + c₂ b (y(t−τ) − y(t))`
/// with `n_tau` steps per revolution.
pub fn rollout_turning(
    model: &TurningModel,
    omega: f64,
    b: f64,
    n_tau: usize,
    n_rev: usize,
    start: RolloutStart,
    keep_series: bool,
) -> Rollout {
    let dt = 1.0 / (omega * n_tau as f64);
    let offset = model.force_offset * b;
    let gain = model.force_gain * b;
    let mut line = DelayLine::filled(n_tau, start.history);
    let (mut y, mut v) = (start.y, start.v);
    let mut samples = Vec::with_capacity(n_rev + 1);
    let mut series = keep_series.then(|| (Vec::with_capacity(n_rev * n_tau + 1), Vec::with_capacity(n_rev * n_tau + 1)));
    let mut diverged = false;
    'revs: for _ in 0..n_rev {
        samples.push(y);
        for _ in 0..n_tau {
            if let Some((ys, vs)) = series.as_mut() {
                ys.push(y);
                vs.push(v);
            }
            let f = offset + gain * (line.delayed() - y);
            let a = (f - model.c * v - model.k * y) / model.m;
            line.push(y);
            v += a * dt;
            y += v * dt;
            if !y.is_finite() || y.abs() > 1.0 {
                diverged = true;
                break 'revs;
            }
        }
    }
    if !diverged {
        samples.push(y);
        if let Some((ys, vs)) = series.as_mut() {
            ys.push(y);
            vs.push(v);
        }
    }
    Rollout { once_per_rev: samples, terminal: (y, v), diverged, series }
}

/// Stability metric of a rollout over `n0 + nf` revolutions; a diverged rollout scores 1 m².
pub fn rollout_metric(model: &TurningModel, omega: f64, b: f64, n_tau: usize, n0: usize, nf: usize, start: RolloutStart) -> (f64, Rollout) {
    let r = rollout_turning(model, omega, b, n_tau, n0 + nf, start, false);
    let m = if r.diverged { 1.0 } else { stability_metric(&r.once_per_rev, n0, nf).unwrap_or(1.0) };
    (m, r)
}

/// Settings of the long, finely resolved stability check used as ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineOptions {
    pub steps_per_rev: usize,
    pub n_rev: usize,
    /// Revolutions in each comparison window.
    pub window: usize,
}

impl Default for FineOptions {
    fn default() -> Self {
        Self { steps_per_rev: 200, n_rev: 2000, window: 50 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineVerdict {
    pub early: f64,
    pub late: f64,
    pub stable: bool,
}

/// Classifies a cut by whether the once-per-revolution metric shrinks between the middle
/// and the end of a long rollout from rest.
pub fn fine_stability(model: &TurningModel, omega: f64, b: f64, opts: &FineOptions) -> FineVerdict {
    let r = rollout_turning(model, omega, b, opts.steps_per_rev, opts.n_rev, RolloutStart::REST, false);
    if r.diverged {
        return FineVerdict { early: f64::INFINITY, late: f64::INFINITY, stable: false };
    }
    let w = opts.window.max(1);
    let mid = opts.n_rev / 2;
    let early = stability_metric(&r.once_per_rev, mid - w, w).unwrap_or(f64::INFINITY);
    let late = stability_metric(&r.once_per_rev, opts.n_rev - w, w).unwrap_or(f64::INFINITY);
    // Below 1e-30 m² the differences are rounding noise around the static deflection.
    FineVerdict { early, late, stable: late <= early || late < 1e-30 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::{simulate_turning, TurningParams};
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert_eq!(stability_metric(&[2.0; 10], 3, 5).unwrap(), 0.0);
        let s: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        assert!((stability_metric(&s, 3, 5).unwrap() - 0.25).abs() < 1e-15);
        assert!(stability_metric(&s, 5, 5).is_err());
    }

    #[test]
    fn rollout_matches_simulator() {
        let p = TurningParams { n_rev: 30, ..Default::default() };
        let tr = simulate_turning(&p, 650.0, 0.003).unwrap();
        let r = rollout_turning(&TurningModel::from_params(&p), 650.0, 0.003, p.steps_per_rev, 30, RolloutStart::REST, true);
        let (ys, _) = r.series.unwrap();
        let scale = tr.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..tr.len() {
            assert!((ys[i] - tr.y[i]).abs() <= 1e-9 * scale);
        }
        assert_eq!(r.once_per_rev.len(), 31);
    }

    #[test]
    fn coarse_metric_separates_clear_cases() {
        let m = TurningModel::from_params(&TurningParams::default());
        let (stable, _) = rollout_metric(&m, 600.0, 0.002, 20, 180, 20, RolloutStart::REST);
        let (unstable, _) = rollout_metric(&m, 600.0, 0.008, 20, 180, 20, RolloutStart::REST);
        assert!(stable < 1e-16, "{stable}");
        assert!(unstable > 1e-9, "{unstable}");
    }

    #[test]
    fn fine_classifier_brackets_lobe_at_800() {
        let m = TurningModel::from_params(&TurningParams::default());
        let o = FineOptions::default();
        assert!(fine_stability(&m, 800.0, 0.0076, &o).stable);
        assert!(!fine_stability(&m, 800.0, 0.0079, &o).stable);
    }

    proptest! {
        #[test]
        fn metric_shift_and_scale(vals in proptest::collection::vec(-1.0f64..1.0, 12), shift in -5.0f64..5.0, c in 0.1f64..10.0) {
            let m = stability_metric(&vals, 4, 7).unwrap();
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
            prop_assert!((stability_metric(&shifted, 4, 7).unwrap() - m).abs() <= 1e-9 * (1.0 + m));
            prop_assert!((stability_metric(&scaled, 4, 7).unwrap() - c * c * m).abs() <= 1e-12 * (1.0 + c * c * m));
        }
    }
}
