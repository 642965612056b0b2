//! Lorenz identification experiment: excited training data with noisy derivatives, the
//! ground-truth supports, and the thresholded least-squares baseline.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::equation_name;
use super::{stlsq_from_matrices, SparseModel};
use crate::basis::{build_dictionary, Dictionary};
use crate::error::{invalid, Result};
use crate::plants::{inject_noise, integrate_ode, LorenzParams, Method, Signal, Trajectory};

/// Support sizes of the three true equations.
pub const LORENZ_KAPPAS: [usize; 3] = [3, 3, 2];

/// Dictionary indices of the true terms: `{x1, x2, u}`, `{x1, x2, x1·x3}`, `{x3, x1·x2}`.
pub const LORENZ_TRUTH: [&[usize]; 3] = [&[1, 2, 4], &[1, 2, 7], &[3, 6]];

/// Monomials up to degree two in `(x1, x2, x3, u)`: 15 terms.
pub fn lorenz_dictionary() -> Dictionary {
    build_dictionary(3, 1, 2, &[]).expect("valid arity")
}

pub fn truth_gamma(p: usize) -> Vec<Vec<bool>> {
    LORENZ_TRUTH.iter().map(|s| (0..p).map(|i| s.contains(&i)).collect()).collect()
}

/// Nonzero coefficients of the true model in the order of [`LORENZ_TRUTH`].
pub fn truth_coefficients(p: &LorenzParams) -> [Vec<f64>; 3] {
    [vec![-p.alpha, p.alpha, 1.0], vec![p.rho, -1.0, -1.0], vec![-p.beta_lorenz, 1.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzDataOptions {
    pub params: LorenzParams,
    pub x0: [f64; 3],
    pub dt: f64,
    pub duration: f64,
    pub excitation: Signal,
    /// Input applied after training, before control starts.
    pub validation: Signal,
    pub validation_duration: f64,
}

impl Default for LorenzDataOptions {
    fn default() -> Self {
        Self {
            params: LorenzParams::default(),
            x0: [-8.0, 8.0, 27.0],
            dt: 0.001,
            duration: 10.0,
            excitation: Signal::Schroeder { amplitude: 150.0, harmonics: 8, period: 10.0 },
            validation: Signal::validation_cube(),
            validation_duration: 10.0,
        }
    }
}

impl LorenzDataOptions {
    fn steps(&self, duration: f64) -> Result<usize> {
        if !(self.dt > 0.0) || !(duration > 0.0) {
            return Err(invalid("dt and duration must be positive"));
        }
        Ok((duration / self.dt).round() as usize)
    }

    /// Noise-free training trajectory with exact derivatives.
    pub fn simulate(&self) -> Result<Trajectory> {
        self.excitation.validate()?;
        integrate_ode(&self.params, &self.x0, &self.excitation, self.dt, self.steps(self.duration)?, Method::Rk4)
    }

    /// Plant state after training and validation, where closed-loop control begins.
    pub fn control_start(&self) -> Result<[f64; 3]> {
        let train = self.simulate()?;
        let n = train.x.nrows() - 1;
        let x1 = [train.x[(n, 0)], train.x[(n, 1)], train.x[(n, 2)]];
        self.validation.validate()?;
        let val = integrate_ode(&self.params, &x1, &self.validation, self.dt, self.steps(self.validation_duration)?, Method::Rk4)?;
        let m = val.x.nrows() - 1;
        Ok([val.x[(m, 0)], val.x[(m, 1)], val.x[(m, 2)]])
    }
}

/// Adds noise with ratio `r` to each derivative column (stream = column index).
pub fn with_noisy_derivatives(clean: &Trajectory, r: f64, seed: u64) -> Result<Trajectory> {
    let xdot = clean.xdot.as_ref().ok_or_else(|| invalid("trajectory carries no derivatives"))?;
    let mut noisy = xdot.clone();
    for j in 0..xdot.ncols() {
        let col: Vec<f64> = xdot.column(j).iter().copied().collect();
        let n = inject_noise(&col, r, seed, j as u64);
        noisy.set_column(j, &DVector::from_vec(n));
    }
    let mut out = clean.clone();
    out.xdot = Some(noisy);
    Ok(out)
}

/// Fits each equation with the thresholded least-squares baseline.
pub fn stlsq_model(dataset: &Trajectory, dict: &Dictionary, threshold: f64, max_iters: usize) -> Result<SparseModel> {
    let xdot = dataset.xdot.as_ref().ok_or_else(|| invalid("trajectory carries no derivatives"))?;
    let theta = dict.evaluate(&dataset.x, &dataset.u, &[])?;
    let targets: Vec<DVector<f64>> = (0..xdot.ncols()).map(|j| xdot.column(j).into_owned()).collect();
    let names: Vec<String> = (0..xdot.ncols()).map(equation_name).collect();
    stlsq_from_matrices(&theta, &targets, &names, dict, threshold, max_iters)
}
