use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sysid::turning::TurningModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LobePoint {
    /// Spindle speed, rev/s.
    pub omega: f64,
    /// Limiting chip width, m.
    pub b_lim: f64,
    /// Chatter frequency, rad/s.
    pub chatter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub index: usize,
    pub points: Vec<LobePoint>,
}

/// Stability lobes of a single-mode structure under a regenerative cutting force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LobeDiagram {
    pub lobes: Vec<Lobe>,
    /// (m, c, k).
    pub modal: (f64, f64, f64),
    /// (K_s, force angle in rad).
    pub force: (f64, f64),
}

/// `2 k ζ (1 + ζ) / (K_s cos β)`.
pub fn analytic_critical_depth(m: f64, c: f64, k: f64, ks: f64, beta_force: f64) -> f64 {
    let zeta = c / (2.0 * (k * m).sqrt());
    2.0 * k * zeta * (1.0 + zeta) / (ks * beta_force.cos())
}

fn validate(m: f64, c: f64, k: f64, ks: f64, beta: f64) -> Result<()> {
    if [m, c, k, ks].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("modal and force parameters must be positive"));
    }
    if !(beta.cos() > 0.0) {
        return Err(invalid("force angle must have a positive cosine"));
    }
    Ok(())
}

/// Lobes over a chatter-frequency grid (Hz). Grid points where the real part of the
/// frequency response is non-negative have no finite limit and are skipped.
pub fn stability_lobes(
    m: f64,
    c: f64,
    k: f64,
    ks: f64,
    beta_force: f64,
    lobe_indices: &[usize],
    chatter_freq_grid_hz: &[f64],
) -> Result<LobeDiagram> {
    validate(m, c, k, ks, beta_force)?;
    let mut diagram = LobeDiagram { lobes: Vec::new(), modal: (m, c, k), force: (ks, beta_force) };
    for &n in lobe_indices {
        let mut points = Vec::new();
        for &f in chatter_freq_grid_hz {
            let w = 2.0 * PI * f;
            if let Some(b_lim) = diagram.limit_at_frequency(w) {
                let omega = w / diagram.phase(w, n);
                points.push(LobePoint { omega, b_lim, chatter: w });
            }
        }
        diagram.lobes.push(Lobe { index: n, points });
    }
    Ok(diagram)
}

/// Lobes from an identified equation of motion; K_s is recovered from its force gain.
pub fn stability_lobes_for_model(model: &TurningModel, beta_force: f64, lobe_indices: &[usize], chatter_freq_grid_hz: &[f64]) -> Result<LobeDiagram> {
    let ks = model.force_gain / beta_force.cos();
    stability_lobes(model.m, model.c, model.k, ks, beta_force, lobe_indices, chatter_freq_grid_hz)
}

impl LobeDiagram {
    fn gain(&self) -> f64 {
        self.force.0 * self.force.1.cos()
    }

    pub fn natural_frequency(&self) -> f64 {
        let (m, _, k) = self.modal;
        (k / m).sqrt()
    }

    /// Frequency response `1 / (k − mω² + icω)`.
    pub fn frf(&self, w: f64) -> Complex<f64> {
        let (m, c, k) = self.modal;
        Complex::new(1.0, 0.0) / Complex::new(k - m * w * w, c * w)
    }

    /// Limiting width at chatter frequency `w` (rad/s), if finite.
    pub fn limit_at_frequency(&self, w: f64) -> Option<f64> {
        let g = self.frf(w);
        (g.re < 0.0).then(|| -1.0 / (2.0 * self.gain() * g.re))
    }

    /// Regenerative phase `ωτ` on lobe `n`, in `(2πn + π, 2π(n+1))` above resonance.
    pub fn phase(&self, w: f64, n: usize) -> f64 {
        let g = self.frf(w);
        2.0 * (PI + (-g.re / g.im).atan()) + 2.0 * PI * n as f64
    }

    /// Residual of the characteristic equation at a lobe point; zero on the boundary.
    pub fn characteristic_residual(&self, p: &LobePoint) -> f64 {
        let theta = p.chatter / p.omega;
        let g = self.frf(p.chatter);
        let regen = Complex::new(1.0, 0.0) - Complex::new(0.0, -theta).exp();
        (Complex::new(1.0, 0.0) + regen * g * (self.gain() * p.b_lim)).norm()
    }

    /// Minimum of the limiting width over all chatter frequencies.
    pub fn critical_depth(&self) -> f64 {
        let wn = self.natural_frequency();
        let f = |w: f64| self.limit_at_frequency(w).unwrap_or(f64::INFINITY);
        // The minimum of −1/Re G lies just above resonance.
        let (mut a, mut b) = (wn * (1.0 + 1e-9), wn * 2.0);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (b - r * (b - a), a + r * (b - a));
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - r * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + r * (b - a);
                f2 = f(x2);
            }
        }
        f1.min(f2)
    }

    /// Limiting width at spindle speed `omega` (rev/s): the lowest lobe over that speed.
    pub fn limit_at(&self, omega: f64) -> f64 {
        let wn = self.natural_frequency();
        let mut best = f64::INFINITY;
        for lobe in &self.lobes {
            let n = lobe.index;
            let speed = |w: f64| w / self.phase(w, n);
            let mut lo = wn * (1.0 + 1e-12);
            if speed(lo) >= omega {
                continue;
            }
            let mut hi = wn * 1.5;
            while speed(hi) < omega {
                hi *= 2.0;
                if hi > wn * 1e8 {
                    break;
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if speed(mid) < omega {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if let Some(b) = self.limit_at_frequency(0.5 * (lo + hi)) {
                best = best.min(b);
            }
        }
        best
    }

    /// True when `b` lies strictly below the lobe envelope at `omega`.
    pub fn is_stable(&self, omega: f64, b: f64) -> bool {
        b < self.limit_at(omega)
    }

    /// Writes `lobe_index, omega_rps, blim_mm, chatter_hz`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lobe_index", "omega_rps", "blim_mm", "chatter_hz"])?;
        for lobe in &self.lobes {
            for p in &lobe.points {
                wr.write_record(&[
                    lobe.index.to_string(),
                    p.omega.to_string(),
                    (p.b_lim * 1e3).to_string(),
                    (p.chatter / (2.0 * PI)).to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Chatter-frequency grid from just above resonance to `upper_ratio · f_n`.
pub fn default_frequency_grid(m: f64, k: f64, points: usize, upper_ratio: f64) -> Vec<f64> {
    let fnat = (k / m).sqrt() / (2.0 * PI);
    (1..=points).map(|i| fnat * (1.0 + (upper_ratio - 1.0) * i as f64 / points as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::TurningParams;

    fn reference() -> LobeDiagram {
        let p = TurningParams::default();
        let grid = default_frequency_grid(p.m, p.k, 400, 1.6);
        stability_lobes(p.m, p.c, p.k, p.ks, p.beta_force, &[0, 1, 2, 3], &grid).unwrap()
    }

    #[test]
    fn critical_depth_matches_formula() {
        let p = TurningParams::default();
        let d = reference();
        let analytic = analytic_critical_depth(p.m, p.c, p.k, p.ks, p.beta_force);
        assert!((analytic * 1e3 - 3.74).abs() < 0.01, "{analytic}");
        assert!((d.critical_depth() / analytic - 1.0).abs() < 0.01);
        assert!(d.lobes.iter().all(|l| l.points.iter().all(|p| p.b_lim > 0.0 && p.omega > 0.0)));
    }

    #[test]
    fn every_point_solves_characteristic_equation() {
        let d = reference();
        for lobe in &d.lobes {
            for p in &lobe.points {
                assert!(d.characteristic_residual(p) < 1e-6);
            }
        }
    }

    #[test]
    fn phase_stays_in_lobe_band() {
        let d = reference();
        let wn = d.natural_frequency();
        for n in 0..3 {
            for r in [1.001, 1.1, 1.5, 3.0] {
                let th = d.phase(wn * r, n);
                assert!(th > 2.0 * PI * n as f64 + PI && th < 2.0 * PI * (n + 1) as f64);
            }
        }
    }

    #[test]
    fn damping_raises_critical_depth() {
        let p = TurningParams::default();
        let mut last = 0.0;
        for c in [400.0, 795.77, 1200.0, 2000.0] {
            let d = stability_lobes(p.m, c, p.k, p.ks, p.beta_force, &[0], &[500.0]).unwrap();
            let b = d.critical_depth();
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn limit_at_agrees_with_stored_points() {
        let d = reference();
        for p in d.lobes[0].points.iter().step_by(37) {
            let lim = d.limit_at(p.omega);
            assert!(lim <= p.b_lim * (1.0 + 1e-9));
        }
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        reference().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("lobe_index,omega_rps,blim_mm,chatter_hz\n"));
    }
}
