//! Exact cardinality-constrained support selection.

use itertools::Itertools;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{stlsq_baseline, RegressionProblem};
use crate::error::Result;
use crate::linalg::{ridge_box, select_columns, RidgeFit};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Enumerate when the number of supports is at most the enumeration cap, otherwise branch-and-bound.
    #[default]
    Auto,
    Enumerate,
    BranchAndBound,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub strategy: Strategy,
    pub enumeration_cap: u64,
    /// Maximum number of branch-and-bound nodes before giving up on proving optimality.
    pub node_budget: u64,
    pub warm_start: bool,
    /// How many times the big-M bound may be doubled when the solution presses against it.
    pub max_big_m_doublings: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            enumeration_cap: 200_000,
            node_budget: 10_000_000,
            warm_start: true,
            max_big_m_doublings: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSelection {
    pub gamma: Vec<bool>,
    /// Selected indices, ascending.
    pub support: Vec<usize>,
    /// `‖ỹ − Θ̃ξ‖² + λ₂‖ξ‖²` at the optimum.
    pub objective: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    /// Coefficients of the selection stage, on the normalized scale.
    pub coefficients: Vec<f64>,
    /// Big-M bound in force when the search finished.
    pub big_m: f64,
    pub strategy_used: Strategy,
}

/// One explored branch-and-bound node.
#[derive(Clone, Debug)]
pub struct NodeTrace {
    pub fixed_in: Vec<usize>,
    pub undecided: Vec<usize>,
    pub bound: f64,
}

/// Number of supports of size `k` among `n` terms, saturating.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// Solves the cardinality-constrained ridge problem to global optimality.
pub fn solve_support(problem: &RegressionProblem, options: &SolverOptions) -> Result<SupportSelection> {
    solve_inner(problem, options, None)
}

/// As [`solve_support`], also returning every node the branch-and-bound search bounded.
pub fn solve_support_traced(
    problem: &RegressionProblem,
    options: &SolverOptions,
) -> Result<(SupportSelection, Vec<NodeTrace>)> {
    let mut trace = Vec::new();
    let sel = solve_inner(problem, options, Some(&mut trace))?;
    Ok((sel, trace))
}

fn solve_inner(
    problem: &RegressionProblem,
    options: &SolverOptions,
    mut trace: Option<&mut Vec<NodeTrace>>,
) -> Result<SupportSelection> {
    let p = problem.n_terms();
    let strategy = match options.strategy {
        Strategy::Auto if binomial(p, problem.kappa) <= options.enumeration_cap as u128 => Strategy::Enumerate,
        Strategy::Auto => Strategy::BranchAndBound,
        s => s,
    };
    let mut big_m = problem.big_m;
    let mut doublings = 0;
    loop {
        if let Some(t) = trace.as_deref_mut() {
            t.clear();
        }
        let search = Search { problem, big_m };
        let mut sel = match strategy {
            Strategy::Enumerate => search.enumerate(),
            _ => search.branch_and_bound(options, trace.as_deref_mut()),
        };
        sel.strategy_used = strategy;
        let pressing = sel.coefficients.iter().any(|c| c.abs() >= 0.9 * big_m);
        if !pressing || doublings >= options.max_big_m_doublings {
            return Ok(sel);
        }
        big_m *= 2.0;
        doublings += 1;
    }
}

struct Search<'a> {
    problem: &'a RegressionProblem,
    big_m: f64,
}

/// Strictly better objective, or equal objective with the lexicographically smaller support.
fn better(obj: f64, support: &[usize], best_obj: f64, best: &[usize]) -> bool {
    obj < best_obj || (obj == best_obj && support < best)
}

impl Search<'_> {
    fn fit(&self, cols: &[usize]) -> RidgeFit {
        let a = select_columns(&self.problem.theta, cols);
        ridge_box(&a, &self.problem.target, self.problem.lambda2, self.big_m)
    }

    fn selection(&self, support: Vec<usize>, fit: RidgeFit, proven: bool, nodes: u64) -> SupportSelection {
        let p = self.problem.n_terms();
        let mut gamma = vec![false; p];
        let mut coefficients = vec![0.0; p];
        for (i, &j) in support.iter().enumerate() {
            gamma[j] = true;
            coefficients[j] = fit.coefficients[i];
        }
        SupportSelection {
            gamma,
            support,
            objective: fit.objective,
            proven_optimal: proven,
            nodes_explored: nodes,
            coefficients,
            big_m: self.big_m,
            strategy_used: Strategy::Auto,
        }
    }

    fn enumerate(&self) -> SupportSelection {
        let p = self.problem.n_terms();
        let mut best: Option<(Vec<usize>, RidgeFit)> = None;
        let mut nodes = 0u64;
        for combo in (0..p).combinations(self.problem.kappa) {
            nodes += 1;
            let fit = self.fit(&combo);
            // Combinations arrive in lexicographic order, so a strict comparison keeps the smallest tie.
            if best.as_ref().is_none_or(|(_, b)| fit.objective < b.objective) {
                best = Some((combo, fit));
            }
        }
        let (support, fit) = best.expect("kappa <= P guarantees at least one support");
        self.selection(support, fit, true, nodes)
    }

    fn warm_start(&self) -> Vec<usize> {
        let p = self.problem.n_terms();
        let threshold = 0.0;
        let xi = match stlsq_baseline(&self.problem.theta, &self.problem.target, threshold, 10) {
            Ok(r) => r.xi,
            Err(_) => DVector::zeros(p),
        };
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| xi[b].abs().total_cmp(&xi[a].abs()).then(a.cmp(&b)));
        let mut s: Vec<usize> = order[..self.problem.kappa].to_vec();
        s.sort_unstable();
        s
    }

    fn branch_and_bound(&self, options: &SolverOptions, mut trace: Option<&mut Vec<NodeTrace>>) -> SupportSelection {
        #[derive(Clone, Copy, PartialEq)]
        enum State {
            Undecided,
            In,
            Out,
        }
        let p = self.problem.n_terms();
        let kappa = self.problem.kappa;

        let (mut best_support, mut best_fit) = if options.warm_start {
            let s = self.warm_start();
            let f = self.fit(&s);
            (s, f)
        } else {
            (Vec::new(), RidgeFit { coefficients: DVector::zeros(0), objective: f64::INFINITY, box_active: false })
        };

        // Absolute slack covers rounding and the tiny ridge used on rank-deficient unions.
        let slack = 1e-12 * self.problem.target.norm_squared();
        let mut stack = vec![vec![State::Undecided; p]];
        let mut nodes = 0u64;
        let mut exhausted = false;
        while let Some(node) = stack.pop() {
            if nodes >= options.node_budget {
                exhausted = true;
                break;
            }
            nodes += 1;
            let fixed_in: Vec<usize> = (0..p).filter(|&j| node[j] == State::In).collect();
            let undecided: Vec<usize> = (0..p).filter(|&j| node[j] == State::Undecided).collect();
            if fixed_in.len() + undecided.len() < kappa {
                continue;
            }
            if fixed_in.len() == kappa || fixed_in.len() + undecided.len() == kappa {
                let leaf: Vec<usize> = (0..p).filter(|&j| node[j] == State::In || (fixed_in.len() < kappa && node[j] == State::Undecided)).collect();
                let fit = self.fit(&leaf);
                if better(fit.objective, &leaf, best_fit.objective, &best_support) {
                    best_support = leaf;
                    best_fit = fit;
                }
                continue;
            }
            let union: Vec<usize> = (0..p).filter(|&j| node[j] != State::Out).collect();
            let relaxed = self.fit(&union);
            let bound = relaxed.objective;
            if let Some(t) = trace.as_deref_mut() {
                t.push(NodeTrace { fixed_in: fixed_in.clone(), undecided: undecided.clone(), bound });
            }
            if bound > best_fit.objective * (1.0 + 1e-9) + slack {
                continue;
            }
            let mut branch = undecided[0];
            let mut branch_mag = -1.0;
            for (pos, &j) in union.iter().enumerate() {
                if node[j] == State::Undecided {
                    let mag = relaxed.coefficients[pos].abs();
                    if mag > branch_mag {
                        branch_mag = mag;
                        branch = j;
                    }
                }
            }
            let mut out = node.clone();
            out[branch] = State::Out;
            let mut inc = node;
            inc[branch] = State::In;
            stack.push(out);
            stack.push(inc);
        }
        self.selection(best_support, best_fit, !exhausted, nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, p: usize, kappa: usize) -> RegressionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut xi = DVector::zeros(p);
        for j in 0..kappa {
            xi[(j * 5 + 1) % p] = 1.0 + j as f64;
        }
        let noise = DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let y = &theta * xi + noise;
        let norm = super::super::normalize_columns(&theta, &y, None).unwrap();
        RegressionProblem::new(norm.theta, norm.target, kappa, 0.01, 1000.0).unwrap()
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(15, 2), 105);
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(5, 5), 1);
        assert_eq!(binomial(5, 0), 1);
    }

    #[test]
    fn full_support_when_kappa_is_p() {
        let prob = random_problem(3, 40, 5, 5);
        let sel = solve_support(&prob, &SolverOptions::default()).unwrap();
        assert!(sel.gamma.iter().all(|&g| g));
        let full = ridge_box(&prob.theta, &prob.target, prob.lambda2, prob.big_m);
        assert_eq!(sel.objective, full.objective);
    }

    #[test]
    fn bnb_matches_enumeration() {
        for seed in 0..10 {
            let prob = random_problem(seed, 100, 9, 1 + (seed as usize % 3));
            let e = solve_support(&prob, &SolverOptions { strategy: Strategy::Enumerate, ..Default::default() }).unwrap();
            let b = solve_support(&prob, &SolverOptions { strategy: Strategy::BranchAndBound, ..Default::default() }).unwrap();
            assert_eq!(e.support, b.support);
            assert_eq!(e.objective, b.objective);
            assert!(b.proven_optimal);
        }
    }

    #[test]
    fn bnb_without_warm_start_matches() {
        let prob = random_problem(42, 80, 10, 3);
        let e = solve_support(&prob, &SolverOptions { strategy: Strategy::Enumerate, ..Default::default() }).unwrap();
        let b = solve_support(&prob, &SolverOptions { strategy: Strategy::BranchAndBound, warm_start: false, ..Default::default() }).unwrap();
        assert_eq!(e.support, b.support);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let prob = random_problem(7, 60, 12, 4);
        let b = solve_support(&prob, &SolverOptions { strategy: Strategy::BranchAndBound, node_budget: 3, ..Default::default() }).unwrap();
        assert!(!b.proven_optimal);
        assert_eq!(b.support.len(), 4);
        assert!(b.nodes_explored <= 3);
    }

    #[test]
    fn lexicographic_tie_break() {
        // Two identical columns give identical objectives; the lower index must win.
        let mut theta = DMatrix::from_fn(20, 3, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 + 1.0);
        let c = theta.column(2).clone_owned();
        theta.column_mut(0).copy_from(&c);
        let y = theta.column(2) * 2.0;
        let prob = RegressionProblem::new(theta, y, 1, 0.0, 1e6).unwrap();
        for strategy in [Strategy::Enumerate, Strategy::BranchAndBound] {
            let sel = solve_support(&prob, &SolverOptions { strategy, ..Default::default() }).unwrap();
            assert_eq!(sel.support, vec![0]);
        }
    }

    #[test]
    fn big_m_inflates_when_binding() {
        let theta = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64 + 1.0);
        let y = theta.column(0) * 50.0;
        let prob = RegressionProblem::new(theta, y, 1, 0.0, 1.0).unwrap();
        let sel = solve_support(&prob, &SolverOptions::default()).unwrap();
        assert!(sel.big_m > 50.0 / 0.9);
        assert!((sel.coefficients[0] - 50.0).abs() < 1e-9);
    }
}
