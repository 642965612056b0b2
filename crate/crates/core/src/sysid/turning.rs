//! Turning identification: a structural regression `F_n ≈ m ÿ + c ẏ + k y` and a
//! separate force regression `F_n ≈ c₁ b + c₂ b (y(t−τ) − y(t))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{identify_from_matrices, stlsq_from_matrices, IdentifyOptions, SparseModel};
use crate::basis::{build_dictionary_named, Dictionary};
use crate::error::{invalid, Result};
use crate::plants::{inject_noise, TurningParams, TurningTrajectory};

/// Indices of `y`, `ẏ`, `ÿ` in [`structural_dictionary`].
pub const STRUCTURAL_TRUTH: [usize; 3] = [1, 2, 3];
/// Indices of `b` and `b·(y(t−τ) − y(t))` in [`force_dictionary`].
pub const FORCE_TRUTH: [usize; 2] = [0, 10];

fn names() -> Vec<String> {
    vec!["y".into(), "ẏ".into(), "ÿ".into()]
}

/// Constant plus all monomials of degree ≤ 2 in `(y, ẏ, ÿ)`: ten terms.
pub fn structural_dictionary() -> Dictionary {
    build_dictionary_named(3, 0, 2, &[], Some(names())).expect("valid arity")
}

/// The structural terms plus the delay difference, every column multiplied by the chip width `b`.
pub fn force_dictionary() -> Dictionary {
    let mut d = build_dictionary_named(3, 0, 2, &[0], Some(names())).expect("valid arity");
    for t in &mut d.terms {
        t.label = if t.label == "1" { "b".into() } else { format!("b·{}", t.label) };
    }
    d
}

/// Equation of motion `m ÿ + c ẏ + k y = c₁ b + c₂ b (y(t−τ) − y(t))` in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningModel {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    /// `c₁ = K_s h_m cos β`, N/m.
    pub force_offset: f64,
    /// `c₂ = K_s cos β`, N/m².
    pub force_gain: f64,
}

impl TurningModel {
    pub fn from_params(p: &TurningParams) -> Self {
        Self { m: p.m, c: p.c, k: p.k, force_offset: p.force_gain() * p.hm, force_gain: p.force_gain() }
    }

    /// Mean chip thickness implied by the two force coefficients.
    pub fn hm(&self) -> f64 {
        self.force_offset / self.force_gain
    }

    pub fn damping_ratio(&self) -> f64 {
        self.c / (2.0 * (self.k * self.m).sqrt())
    }

    pub fn render(&self) -> String {
        format!(
            "{:.2}·ÿ + {:.2}·ẏ + {:.2}·y = {:.4e}·b + {:.4e}·b·(y(t-τ)-y(t))",
            self.m, self.c, self.k, self.force_offset, self.force_gain
        )
    }
}

/// Which measured channels are corrupted by noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannels {
    /// Only the regression target F_n.
    #[default]
    TargetOnly,
    /// y, ẏ, ÿ and F_n; the delay column is rebuilt from the noisy y.
    All,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TurningIdentifyOptions {
    /// Leading samples used for training.
    pub n_train: usize,
    pub noise_ratio: f64,
    pub seed: u64,
    pub noise_channels: NoiseChannels,
    pub structural_kappa: usize,
    pub force_kappa: usize,
    pub identify: IdentifyOptions,
}

impl Default for TurningIdentifyOptions {
    fn default() -> Self {
        Self {
            n_train: 2000,
            noise_ratio: 0.0,
            seed: 0,
            noise_channels: NoiseChannels::TargetOnly,
            structural_kappa: 3,
            force_kappa: 2,
            identify: IdentifyOptions { parallel: false, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TurningIdentification {
    pub structural: SparseModel,
    pub force: SparseModel,
    /// Assembled equation of motion; present when both regressions picked the physical terms.
    pub model: Option<TurningModel>,
}

impl TurningIdentification {
    pub fn structural_support_correct(&self) -> bool {
        self.structural.equations[0].support == STRUCTURAL_TRUTH
    }

    pub fn force_support_correct(&self) -> bool {
        self.force.equations[0].support == FORCE_TRUTH
    }

    /// Both supports match the physical equation.
    pub fn support_correct(&self) -> bool {
        self.structural_support_correct() && self.force_support_correct()
    }
}

type RegressionData = (DMatrix<f64>, DMatrix<f64>, DVector<f64>);

fn regression_data(tr: &TurningTrajectory, opts: &TurningIdentifyOptions) -> Result<RegressionData> {
    let n = opts.n_train.min(tr.len());
    if n < 10 {
        return Err(invalid(format!("need at least 10 training samples, have {n}")));
    }
    if !(tr.b > 0.0) {
        return Err(invalid("force regression needs a positive chip width"));
    }
    let r = opts.noise_ratio;
    let seed = opts.seed;
    let force = inject_noise(&tr.force[..n], r, seed, 0);
    let (y, yd, ydd, delay) = match opts.noise_channels {
        NoiseChannels::TargetOnly => (
            tr.y[..n].to_vec(),
            tr.ydot[..n].to_vec(),
            tr.yddot[..n].to_vec(),
            tr.delay[..n].to_vec(),
        ),
        NoiseChannels::All => {
            let y = inject_noise(&tr.y[..n], r, seed, 1);
            let nt = tr.steps_per_rev;
            let delay = (0..n).map(|i| if i >= nt { y[i - nt] - y[i] } else { -y[i] }).collect();
            (y, inject_noise(&tr.ydot[..n], r, seed, 2), inject_noise(&tr.yddot[..n], r, seed, 3), delay)
        }
    };
    let x = DMatrix::from_fn(n, 3, |i, j| [y[i], yd[i], ydd[i]][j]);
    let u = DMatrix::zeros(n, 0);
    let target = DVector::from_vec(force);

    let theta_s = structural_dictionary().evaluate(&x, &u, &[])?;
    let mut theta_f = force_dictionary().evaluate(&x, &u, &[DVector::from_vec(delay)])?;
    theta_f *= tr.b;
    Ok((theta_s, theta_f, target))
}

fn assemble(structural: SparseModel, force: SparseModel) -> TurningIdentification {
    let mut out = TurningIdentification { structural, force, model: None };
    if out.support_correct() {
        let s = &out.structural.equations[0].coefficients;
        let f = &out.force.equations[0].coefficients;
        out.model = Some(TurningModel { m: s[3], c: s[2], k: s[1], force_offset: f[0], force_gain: f[10] });
    }
    out
}

/// Identifies the structural and force models from the first `n_train` samples.
pub fn identify_turning(tr: &TurningTrajectory, opts: &TurningIdentifyOptions) -> Result<TurningIdentification> {
    let (theta_s, theta_f, target) = regression_data(tr, opts)?;
    let name = ["F_n".to_string()];
    let structural =
        identify_from_matrices(&theta_s, std::slice::from_ref(&target), &name, &structural_dictionary(), &[opts.structural_kappa], &opts.identify)?;
    let force = identify_from_matrices(&theta_f, &[target], &name, &force_dictionary(), &[opts.force_kappa], &opts.identify)?;
    Ok(assemble(structural, force))
}

/// The thresholded least-squares baseline on the same data as [`identify_turning`].
pub fn stlsq_turning(tr: &TurningTrajectory, opts: &TurningIdentifyOptions, threshold: f64, max_iters: usize) -> Result<TurningIdentification> {
    let (theta_s, theta_f, target) = regression_data(tr, opts)?;
    let name = ["F_n".to_string()];
    let structural = stlsq_from_matrices(&theta_s, std::slice::from_ref(&target), &name, &structural_dictionary(), threshold, max_iters)?;
    let force = stlsq_from_matrices(&theta_f, &[target], &name, &force_dictionary(), threshold, max_iters)?;
    Ok(assemble(structural, force))
}
