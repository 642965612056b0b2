use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_coefficients, normalize_columns, solve_support, stlsq_baseline, Lambda2Rule, RegressionProblem, SolverOptions, DEFAULT_BIG_M};
use crate::basis::Dictionary;
use crate::error::{invalid, shape, Result};
use crate::plants::{Dynamics, Trajectory};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    pub lambda2: Lambda2Rule,
    pub big_m: f64,
    pub solver: SolverOptions,
    /// Identify the equations on the rayon pool.
    pub parallel: bool,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self { lambda2: Lambda2Rule::NoiseScaled, big_m: DEFAULT_BIG_M, solver: SolverOptions::default(), parallel: true }
    }
}

/// The identified right-hand side of one state equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationFit {
    pub name: String,
    pub kappa: usize,
    pub support: Vec<usize>,
    /// One coefficient per dictionary term, zero outside the support.
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    pub objective: f64,
    pub lambda2: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub ridge_fallback: bool,
    /// Set when this equation could not be identified.
    pub error: Option<String>,
}

impl EquationFit {
    fn failed(name: String, kappa: usize, p: usize, err: String) -> Self {
        Self {
            name,
            kappa,
            support: Vec::new(),
            coefficients: vec![0.0; p],
            residual_rms: f64::NAN,
            objective: f64::NAN,
            lambda2: f64::NAN,
            proven_optimal: false,
            nodes_explored: 0,
            ridge_fallback: false,
            error: Some(err),
        }
    }

    pub fn gamma(&self) -> Vec<bool> {
        let mut g = vec![false; self.coefficients.len()];
        for &j in &self.support {
            g[j] = true;
        }
        g
    }

    /// Human-readable form such as `ẋ_3 = −2.6667·x3 + 1.0000·x1·x2`.
    pub fn render(&self, dict: &Dictionary) -> String {
        if self.error.is_some() {
            return format!("{} = <failed>", self.name);
        }
        let mut s = format!("{} =", self.name);
        for (i, &j) in self.support.iter().enumerate() {
            let c = self.coefficients[j];
            let label = &dict.terms[j].label;
            let mag = format!("{:.4}", c.abs());
            let body = if label == "1" { mag } else { format!("{mag}·{label}") };
            match (i, c < 0.0) {
                (0, false) => s.push_str(&format!(" {body}")),
                (0, true) => s.push_str(&format!(" −{body}")),
                (_, false) => s.push_str(&format!(" + {body}")),
                (_, true) => s.push_str(&format!(" − {body}")),
            }
        }
        s
    }
}

/// Support and coefficients for every state equation over one dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    pub dictionary: Dictionary,
    pub equations: Vec<EquationFit>,
}

impl SparseModel {
    /// Support flags, one vector per equation.
    pub fn gamma_matrix(&self) -> Vec<Vec<bool>> {
        self.equations.iter().map(EquationFit::gamma).collect()
    }

    /// P×J coefficient matrix.
    pub fn xi_matrix(&self) -> DMatrix<f64> {
        let p = self.dictionary.len();
        DMatrix::from_fn(p, self.equations.len(), |i, j| self.equations[j].coefficients[i])
    }

    pub fn residual_rms(&self) -> Vec<f64> {
        self.equations.iter().map(|e| e.residual_rms).collect()
    }

    pub fn failed_equations(&self) -> Vec<usize> {
        self.equations.iter().enumerate().filter(|(_, e)| e.error.is_some()).map(|(j, _)| j).collect()
    }

    pub fn render(&self) -> Vec<String> {
        self.equations.iter().map(|e| e.render(&self.dictionary)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Dynamics for SparseModel {
    fn state_dim(&self) -> usize {
        self.equations.len()
    }

    fn input_dim(&self) -> usize {
        self.dictionary.input_arity
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for (j, eq) in self.equations.iter().enumerate() {
            dx[j] = eq
                .support
                .iter()
                .map(|&p| eq.coefficients[p] * self.dictionary.eval_term(p, x, u, &[]))
                .sum();
        }
    }
}

pub(crate) fn equation_name(j: usize) -> String {
    format!("ẋ_{}", j + 1)
}

fn identify_one(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    dict: &Dictionary,
    name: String,
    kappa: usize,
    opts: &IdentifyOptions,
) -> EquationFit {
    let p = theta.ncols();
    let run = || -> Result<EquationFit> {
        let labels = dict.labels();
        let norm = normalize_columns(theta, target, Some(&labels))?;
        let lambda2 = opts.lambda2.value(&norm.target);
        let problem = RegressionProblem::new(norm.theta, norm.target, kappa, lambda2, opts.big_m)?;
        let sel = solve_support(&problem, &opts.solver)?;
        let fit = fit_coefficients(theta, target, &sel.gamma)?;
        let resid = target - theta * &fit.xi;
        Ok(EquationFit {
            name: name.clone(),
            kappa,
            support: sel.support,
            coefficients: fit.xi.iter().copied().collect(),
            residual_rms: (resid.norm_squared() / target.len() as f64).sqrt(),
            objective: sel.objective,
            lambda2,
            proven_optimal: sel.proven_optimal,
            nodes_explored: sel.nodes_explored,
            ridge_fallback: fit.ridge_fallback,
            error: None,
        })
    };
    run().unwrap_or_else(|e| EquationFit::failed(name.clone(), kappa, p, e.to_string()))
}

/// Identifies one equation per target column of a precomputed library matrix.
///
/// Failures are recorded per equation; the remaining equations are still identified.
pub fn identify_from_matrices(
    theta: &DMatrix<f64>,
    targets: &[DVector<f64>],
    names: &[String],
    dict: &Dictionary,
    kappas: &[usize],
    opts: &IdentifyOptions,
) -> Result<SparseModel> {
    if theta.ncols() != dict.len() {
        return Err(shape(format!("theta has {} columns, dictionary has {} terms", theta.ncols(), dict.len())));
    }
    if kappas.len() != targets.len() || names.len() != targets.len() {
        return Err(invalid(format!("{} targets, {} kappas, {} names", targets.len(), kappas.len(), names.len())));
    }
    let job = |j: usize| identify_one(theta, &targets[j], dict, names[j].clone(), kappas[j], opts);
    let equations: Vec<EquationFit> = if opts.parallel {
        (0..targets.len()).into_par_iter().map(job).collect()
    } else {
        (0..targets.len()).map(job).collect()
    };
    Ok(SparseModel { dictionary: dict.clone(), equations })
}

/// Runs [`stlsq_baseline`] on each target and packs the fits like an identified model.
pub fn stlsq_from_matrices(
    theta: &DMatrix<f64>,
    targets: &[DVector<f64>],
    names: &[String],
    dict: &Dictionary,
    threshold: f64,
    max_iters: usize,
) -> Result<SparseModel> {
    if theta.ncols() != dict.len() {
        return Err(shape(format!("theta has {} columns, dictionary has {} terms", theta.ncols(), dict.len())));
    }
    if names.len() != targets.len() {
        return Err(invalid(format!("{} targets, {} names", targets.len(), names.len())));
    }
    let mut equations = Vec::with_capacity(targets.len());
    for (target, name) in targets.iter().zip(names) {
        let fit = stlsq_baseline(theta, target, threshold, max_iters)?;
        let resid = target - theta * &fit.xi;
        let support: Vec<usize> = (0..fit.gamma.len()).filter(|&i| fit.gamma[i]).collect();
        equations.push(EquationFit {
            name: name.clone(),
            kappa: support.len(),
            support,
            coefficients: fit.xi.iter().copied().collect(),
            residual_rms: (resid.norm_squared() / target.len() as f64).sqrt(),
            objective: resid.norm_squared(),
            lambda2: 0.0,
            proven_optimal: false,
            nodes_explored: 0,
            ridge_fallback: false,
            error: fit.empty.then(|| "every coefficient fell below the threshold".to_string()),
        });
    }
    Ok(SparseModel { dictionary: dict.clone(), equations })
}

/// Identifies `ẋ = Θ(x, u) ξ` from a trajectory carrying derivatives.
pub fn identify_model(dataset: &Trajectory, dict: &Dictionary, kappas: &[usize], opts: &IdentifyOptions) -> Result<SparseModel> {
    let xdot = dataset.xdot.as_ref().ok_or_else(|| invalid("trajectory carries no derivatives"))?;
    if kappas.len() != xdot.ncols() {
        return Err(invalid(format!("{} kappas for {} equations", kappas.len(), xdot.ncols())));
    }
    let theta = dict.evaluate(&dataset.x, &dataset.u, &[])?;
    let targets: Vec<DVector<f64>> = (0..xdot.ncols()).map(|j| xdot.column(j).into_owned()).collect();
    let names: Vec<String> = (0..xdot.ncols()).map(equation_name).collect();
    identify_from_matrices(&theta, &targets, &names, dict, kappas, opts)
}

/// Scores every κ in `kappas` by the validation RMS of the refit model.
pub fn kappa_sweep(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    validation: (&DMatrix<f64>, &DVector<f64>),
    dict: &Dictionary,
    kappas: &[usize],
    opts: &IdentifyOptions,
) -> Result<Vec<(usize, f64)>> {
    let (tv, yv) = validation;
    if tv.ncols() != theta.ncols() || tv.nrows() != yv.len() {
        return Err(shape("validation data does not match the training library"));
    }
    kappas
        .iter()
        .map(|&k| {
            let eq = identify_one(theta, target, dict, "sweep".into(), k, opts);
            if let Some(e) = eq.error {
                return Err(invalid(e));
            }
            let xi = DVector::from_vec(eq.coefficients);
            let r = yv - tv * xi;
            Ok((k, (r.norm_squared() / yv.len() as f64).sqrt()))
        })
        .collect()
}
