//! Sparse system identification: exact support selection on normalized data
//! followed by a least-squares refit on the original scale.

mod fit;
mod model;
mod support;
pub mod lorenz;
pub mod turning;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

pub use fit::{fit_coefficients, stlsq_baseline, CoefficientFit, StlsqResult};
pub use model::{identify_from_matrices, identify_model, kappa_sweep, stlsq_from_matrices, EquationFit, IdentifyOptions, SparseModel};
pub use support::{
    solve_support, solve_support_traced, NodeTrace, SolverOptions, Strategy, SupportSelection,
};

/// Default bound on normalized coefficients.
pub const DEFAULT_BIG_M: f64 = 1000.0;

/// One cardinality-constrained ridge regression.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    pub kappa: usize,
    pub lambda2: f64,
    pub big_m: f64,
}

impl RegressionProblem {
    pub fn new(theta: DMatrix<f64>, target: DVector<f64>, kappa: usize, lambda2: f64, big_m: f64) -> Result<Self> {
        let (n, p) = theta.shape();
        if target.len() != n {
            return Err(shape(format!("theta has {n} rows but target has {}", target.len())));
        }
        if kappa < 1 || kappa > p {
            return Err(invalid(format!("kappa must lie in [1, {p}], got {kappa}")));
        }
        if n < kappa {
            return Err(invalid(format!("need at least kappa = {kappa} samples, got {n}")));
        }
        if !(lambda2 >= 0.0) {
            return Err(invalid("lambda2 must be non-negative"));
        }
        if !(big_m > 0.0) {
            return Err(invalid("big-M bound must be positive"));
        }
        Ok(Self { theta, target, kappa, lambda2, big_m })
    }

    pub fn n_terms(&self) -> usize {
        self.theta.ncols()
    }
}

/// Column-normalized data and the scales that undo it.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub theta: DMatrix<f64>,
    pub target: DVector<f64>,
    /// `theta = theta_norm · diag(column_scales)`.
    pub column_scales: Vec<f64>,
    pub target_scale: f64,
}

/// Scales every column of `theta`, and the target, to unit Euclidean norm.
///
/// `labels` names the terms for error messages; pass the dictionary labels.
pub fn normalize_columns(theta: &DMatrix<f64>, target: &DVector<f64>, labels: Option<&[String]>) -> Result<Normalized> {
    let mut out = theta.clone();
    let mut column_scales = Vec::with_capacity(theta.ncols());
    for j in 0..theta.ncols() {
        let s = theta.column(j).norm();
        if !(s > 0.0) || !s.is_finite() {
            let term = labels.and_then(|l| l.get(j)).cloned().unwrap_or_else(|| format!("column {j}"));
            return Err(Error::DegenerateColumn { index: j, term });
        }
        out.column_mut(j).scale_mut(1.0 / s);
        column_scales.push(s);
    }
    let ts = target.norm();
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(invalid("target has zero or non-finite norm"));
    }
    Ok(Normalized { theta: out, target: target / ts, column_scales, target_scale: ts })
}

/// How the ridge strength of the support-selection stage is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
#[derive(Default)]
pub enum Lambda2Rule {
    /// Sample standard deviation of the normalized target divided by √N.
    #[default]
    NoiseScaled,
    Fixed { value: f64 },
}


impl Lambda2Rule {
    pub fn value(&self, normalized_target: &DVector<f64>) -> f64 {
        match self {
            Lambda2Rule::NoiseScaled => {
                let n = normalized_target.len();
                crate::linalg::sample_std(normalized_target.as_slice()) / (n as f64).sqrt()
            }
            Lambda2Rule::Fixed { value } => *value,
        }
    }
}
