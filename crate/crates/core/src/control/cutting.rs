//! Selection of spindle speed and chip width that maximize material removal while the
//! identified model stays stable.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{minimize_box, BoxOptions};
use super::stability::{fine_stability, rollout_metric, FineOptions, RolloutStart};
use crate::analysis::material_removal_rate;
use crate::error::{invalid, Error, Result};
use crate::sysid::turning::TurningModel;

/// Multiplier on the nominal threshold so that the coarse rollout agrees with the fine
/// classifier; see [`calibrate_threshold_factor`].
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurningOptConfig {
    pub horizon: usize,
    /// Spindle speed bounds, rev/s.
    pub omega_bounds: (f64, f64),
    /// Chip width bounds, m.
    pub b_bounds: (f64, f64),
    /// Mean chip thickness used in the removal rate, m.
    pub hm: f64,
    pub n_tau: usize,
    pub n0: usize,
    pub nf: usize,
    /// Nominal stability threshold, m².
    pub m0_threshold: f64,
    pub threshold_factor: f64,
    pub penalty_lambda: f64,
    /// Relative objective change that ends the iterations.
    pub delta_l_stop: f64,
    pub k_max: usize,
    pub optimizer: BoxOptions,
}

impl Default for TurningOptConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            omega_bounds: (430.0, 800.0),
            b_bounds: (0.002, 0.008),
            hm: 1e-4,
            n_tau: 20,
            n0: 180,
            nf: 20,
            m0_threshold: 2e-16,
            threshold_factor: DEFAULT_THRESHOLD_FACTOR,
            penalty_lambda: 1e12,
            delta_l_stop: 0.01,
            k_max: 30,
            optimizer: BoxOptions { tol: 1e-6, max_iters: 60, fd_step: 1e-4, initial_step: 0.25 },
        }
    }
}

impl TurningOptConfig {
    pub fn effective_threshold(&self) -> f64 {
        self.m0_threshold * self.threshold_factor
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.omega_bounds;
        let (bl, bh) = self.b_bounds;
        if !(lo > 0.0 && lo <= hi) || !(bl > 0.0 && bl <= bh) {
            return Err(invalid("bounds must be positive and ordered"));
        }
        if self.n0 < 1 || self.nf < 1 || self.n_tau < 1 || self.horizon < 1 {
            return Err(invalid("horizon, N0, Nf and N_tau must be at least 1"));
        }
        if !(self.hm > 0.0) {
            return Err(invalid("chip thickness must be positive"));
        }
        if !(self.m0_threshold > 0.0) || !(self.threshold_factor > 0.0) || !(self.penalty_lambda >= 0.0) {
            return Err(invalid("threshold must be positive and penalty non-negative"));
        }
        Ok(())
    }

    fn metric(&self, model: &TurningModel, omega: f64, b: f64, start: RolloutStart) -> (f64, (f64, f64)) {
        let (m, r) = rollout_metric(model, omega, b, self.n_tau, self.n0, self.nf, start);
        (m, r.terminal)
    }
}

/// One applied cut in the optimization log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub omega: f64,
    /// Chip width, m.
    pub b: f64,
    /// mm²·rps.
    pub mrr: f64,
    pub metric: f64,
    pub stable: bool,
    /// Horizon objective after this iteration's solve; NaN for the starting cut.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuttingResult {
    pub best_omega: f64,
    pub best_b: f64,
    pub best_mrr: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

impl CuttingResult {
    /// Writes `iteration, omega_rps, b_mm, mrr, metric, stable, objective`.
    pub fn write_log_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "omega_rps", "b_mm", "mrr", "metric", "stable", "objective"])?;
        for r in &self.log {
            wr.write_record(&[
                r.iteration.to_string(),
                r.omega.to_string(),
                (r.b * 1e3).to_string(),
                r.mrr.to_string(),
                r.metric.to_string(),
                r.stable.to_string(),
                r.objective.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Receding-horizon search over `(Ω, b)`: each iteration optimizes `H` stages, applies the
/// first, and carries its terminal state forward when that cut is stable.
pub fn select_cutting_parameters(model: &TurningModel, cfg: &TurningOptConfig, start: (f64, f64)) -> Result<CuttingResult> {
    cfg.validate()?;
    let (lo, hi) = cfg.omega_bounds;
    let (bl, bh) = cfg.b_bounds;
    let (w0, b0) = start;
    if !(lo..=hi).contains(&w0) || !(bl..=bh).contains(&b0) {
        return Err(invalid("start lies outside the bounds"));
    }
    let hm = cfg.hm;
    let m0 = cfg.effective_threshold();
    let to_phys = |z: &[f64]| (lo + z[0] * (hi - lo), bl + z[1] * (bh - bl));
    let to_unit = |w: f64, b: f64| [(w - lo) / (hi - lo).max(1e-300), (b - bl) / (bh - bl).max(1e-300)];

    let (m_start, term) = cfg.metric(model, w0, b0, RolloutStart::REST);
    let stable0 = m_start <= m0;
    let mut log = vec![IterationRecord {
        iteration: 0,
        omega: w0,
        b: b0,
        mrr: material_removal_rate(hm, w0, b0),
        metric: m_start,
        stable: stable0,
        objective: f64::NAN,
    }];
    let mut carried = if stable0 { RolloutStart::carried(term.0, term.1) } else { RolloutStart::REST };
    let mut best = stable0.then(|| (w0, b0, material_removal_rate(hm, w0, b0)));
    let mut z: Vec<f64> = (0..cfg.horizon).flat_map(|_| to_unit(w0, b0)).collect();
    let mut last_l: Option<f64> = None;
    let mut iterations = 0;

    for k in 1..=cfg.k_max {
        iterations = k;
        let start_state = carried;
        let objective = |zz: &[f64]| -> Option<f64> {
            let mut total = 0.0;
            for l in 0..cfg.horizon {
                let (w, b) = to_phys(&zz[2 * l..2 * l + 2]);
                let (m, _) = cfg.metric(model, w, b, start_state);
                let mrr = material_removal_rate(hm, w, b);
                total += -mrr * mrr + cfg.penalty_lambda * (m - m0).max(0.0);
            }
            Some(total)
        };
        let res = minimize_box(&objective, &z, &vec![0.0; 2 * cfg.horizon], &vec![1.0; 2 * cfg.horizon], &cfg.optimizer)?;
        let (w, b_proposed) = to_phys(&res.x[0..2]);
        let (mut m, mut term) = cfg.metric(model, w, b_proposed, carried);
        let mut b = b_proposed;
        if m > m0 {
            // The penalty is not exact for every model; pull the chip width back to the
            // widest stable value at this speed.
            if let Some((bs, ms, ts)) = restore_width(model, cfg, w, b_proposed, carried) {
                b = bs;
                m = ms;
                term = ts;
            }
        }
        let stable = m <= m0;
        let mrr = material_removal_rate(hm, w, b);
        let mut plan = res.x.clone();
        plan[1] = to_unit(w, b)[1];
        let value = objective(&plan).unwrap_or(res.value);
        log.push(IterationRecord { iteration: k, omega: w, b, mrr, metric: m, stable, objective: value });
        if stable {
            carried = RolloutStart::carried(term.0, term.1);
            if best.is_none_or(|(_, _, bm)| mrr > bm) {
                best = Some((w, b, mrr));
            }
        }
        // Warm start: drop the applied stage and repeat the last one.
        let mut next: Vec<f64> = plan[2..].to_vec();
        next.extend_from_slice(&plan[2 * cfg.horizon - 2..]);
        z = next;
        if let Some(prev) = last_l {
            if (value - prev).abs() <= cfg.delta_l_stop * prev.abs().max(1.0) {
                break;
            }
        }
        last_l = Some(value);
    }
    let Some((best_omega, best_b, best_mrr)) = best else {
        let min_violation = log.iter().map(|r| r.metric - m0).fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible { min_violation });
    };
    Ok(CuttingResult { best_omega, best_b, best_mrr, iterations, log })
}

/// Bisects the chip width between the lower bound and `b_hi` for the widest cut that meets
/// the threshold. `None` when even the lower bound is unstable.
fn restore_width(model: &TurningModel, cfg: &TurningOptConfig, omega: f64, b_hi: f64, start: RolloutStart) -> Option<(f64, f64, (f64, f64))> {
    let m0 = cfg.effective_threshold();
    let mut lo = cfg.b_bounds.0;
    let (m_lo, t_lo) = cfg.metric(model, omega, lo, start);
    if m_lo > m0 {
        return None;
    }
    let mut best = (lo, m_lo, t_lo);
    let mut hi = b_hi;
    while hi - lo > 1e-4 * (cfg.b_bounds.1 - cfg.b_bounds.0) {
        let mid = 0.5 * (lo + hi);
        let (m, t) = cfg.metric(model, omega, mid, start);
        if m <= m0 {
            lo = mid;
            best = (mid, m, t);
        } else {
            hi = mid;
        }
    }
    Some(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub omega: f64,
    pub b: f64,
    pub metric: f64,
    pub stable: bool,
    pub mrr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Row-major over Ω then b.
    pub points: Vec<GridPoint>,
    /// Stable point with the largest MRR; `None` when no grid point is stable.
    pub best: Option<GridPoint>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Classifies every point of a `resolution × resolution` grid over the configured bounds
/// by a rollout from rest.
pub fn enumerate_cutting_grid(model: &TurningModel, cfg: &TurningOptConfig, resolution: usize) -> Result<GridResult> {
    cfg.validate()?;
    if resolution < 2 {
        return Err(invalid("grid resolution must be at least 2"));
    }
    let omegas = linspace(cfg.omega_bounds.0, cfg.omega_bounds.1, resolution);
    let bs = linspace(cfg.b_bounds.0, cfg.b_bounds.1, resolution);
    let m0 = cfg.effective_threshold();
    let hm = cfg.hm;
    let pairs: Vec<(f64, f64)> = omegas.iter().flat_map(|&w| bs.iter().map(move |&b| (w, b))).collect();
    let points: Vec<GridPoint> = pairs
        .par_iter()
        .map(|&(omega, b)| {
            let (metric, _) = cfg.metric(model, omega, b, RolloutStart::REST);
            GridPoint { omega, b, metric, stable: metric <= m0, mrr: material_removal_rate(hm, omega, b) }
        })
        .collect();
    let best = points
        .iter()
        .filter(|p| p.stable)
        .fold(None::<&GridPoint>, |acc, p| match acc {
            Some(a) if a.mrr >= p.mrr => Some(a),
            _ => Some(p),
        })
        .cloned();
    Ok(GridResult { points, best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub factor: f64,
    /// `(factor, disagreements)` for every candidate.
    pub scores: Vec<(f64, usize)>,
    pub points: usize,
}

/// Picks the power-of-ten multiplier on the nominal threshold for which the coarse rollout
/// classification disagrees least with [`fine_stability`] on a grid over the bounds.
/// Ties go to the smaller (more conservative) factor.
pub fn calibrate_threshold_factor(model: &TurningModel, cfg: &TurningOptConfig, resolution: usize, fine: &FineOptions) -> Result<Calibration> {
    cfg.validate()?;
    if resolution < 2 {
        return Err(invalid("grid resolution must be at least 2"));
    }
    let omegas = linspace(cfg.omega_bounds.0, cfg.omega_bounds.1, resolution);
    let bs = linspace(cfg.b_bounds.0, cfg.b_bounds.1, resolution);
    let pairs: Vec<(f64, f64)> = omegas.iter().flat_map(|&w| bs.iter().map(move |&b| (w, b))).collect();
    let evaluated: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(w, b)| {
            let (m, _) = cfg.metric(model, w, b, RolloutStart::REST);
            (m, fine_stability(model, w, b, fine).stable)
        })
        .collect();
    let scores: Vec<(f64, usize)> = (0..=12)
        .map(|e| {
            let f = 10f64.powi(e);
            let thr = cfg.m0_threshold * f;
            (f, evaluated.iter().filter(|(m, truth)| (*m <= thr) != *truth).count())
        })
        .collect();
    let factor = scores.iter().fold(scores[0], |a, s| if s.1 < a.1 { *s } else { a }).0;
    Ok(Calibration { factor, scores, points: pairs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{default_frequency_grid, stability_lobes_for_model};
    use crate::plants::TurningParams;

    fn truth() -> TurningModel {
        TurningModel::from_params(&TurningParams::default())
    }

    #[test]
    fn default_factor_matches_calibration() {
        let cal = calibrate_threshold_factor(&truth(), &TurningOptConfig::default(), 12, &FineOptions::default()).unwrap();
        assert_eq!(cal.factor, DEFAULT_THRESHOLD_FACTOR, "{:?}", cal.scores);
        assert_eq!(cal.points, 144);
    }

    #[test]
    fn unpenalized_search_in_stable_box_reaches_corner() {
        let cfg = TurningOptConfig { b_bounds: (0.001, 0.002), penalty_lambda: 0.0, ..Default::default() };
        let r = select_cutting_parameters(&truth(), &cfg, (600.0, 0.001)).unwrap();
        assert!((r.best_omega - 800.0).abs() < 1e-9 && (r.best_b - 0.002).abs() < 1e-12, "{r:?}");
        assert!((r.best_mrr - 160.0).abs() < 1e-9);
    }

    #[test]
    fn search_agrees_with_grid_oracle() {
        let model = truth();
        let cfg = TurningOptConfig::default();
        let r = select_cutting_parameters(&model, &cfg, (600.0, 0.002)).unwrap();
        assert!(r.iterations <= cfg.k_max);
        assert_eq!(r.log[0].mrr, 120.0);
        for rec in &r.log {
            assert!((430.0..=800.0).contains(&rec.omega) && (0.002..=0.008).contains(&rec.b), "{rec:?}");
        }
        let grid = enumerate_cutting_grid(&model, &cfg, 20).unwrap();
        let best = grid.best.unwrap();
        let cell = material_removal_rate(cfg.hm, 800.0, 0.006 / 19.0);
        assert!(r.best_mrr >= best.mrr - cell, "{} vs {}", r.best_mrr, best.mrr);
        // The chosen cut lies below the frequency-domain limit at that speed.
        let grid_hz = default_frequency_grid(model.m, model.k, 4000, 2.0);
        let lobes = stability_lobes_for_model(&model, TurningParams::default().beta_force, &[0, 1, 2, 3, 4], &grid_hz).unwrap();
        assert!(r.best_b <= lobes.limit_at(r.best_omega) * 1.02);
    }

    #[test]
    fn infeasible_box() {
        let cfg = TurningOptConfig { b_bounds: (0.05, 0.06), k_max: 2, ..Default::default() };
        assert!(matches!(select_cutting_parameters(&truth(), &cfg, (600.0, 0.05)), Err(Error::Infeasible { .. })));
        assert!(enumerate_cutting_grid(&truth(), &cfg, 3).unwrap().best.is_none());
    }

    #[test]
    fn rejects_bad_configs() {
        let model = truth();
        let cfg = TurningOptConfig::default();
        assert!(select_cutting_parameters(&model, &cfg, (900.0, 0.002)).is_err());
        assert!(enumerate_cutting_grid(&model, &cfg, 1).is_err());
        let bad = TurningOptConfig { omega_bounds: (800.0, 430.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TurningOptConfig { m0_threshold: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log_csv_header() {
        let cfg = TurningOptConfig { k_max: 1, ..Default::default() };
        let r = select_cutting_parameters(&truth(), &cfg, (600.0, 0.002)).unwrap();
        let mut buf = Vec::new();
        r.write_log_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iteration,omega_rps,b_mm,mrr,metric,stable,objective\n0,600,2,120,"), "{s}");
    }
}
