//! Dictionaries of candidate basis terms and their evaluation over data.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// What a dictionary term computes from one sample.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    Constant,
    /// One exponent per variable, states first then inputs.
    Monomial { exponents: Vec<u32> },
    /// `x_j(t − τ) − x_j(t)`; the value is supplied by the caller as a precomputed column.
    DelayDifference { state: usize },
    /// `sin(harmonic · v)` for variable `v` (states first then inputs).
    Sin { variable: usize, harmonic: u32 },
    Cos { variable: usize, harmonic: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisTerm {
    #[serde(flatten)]
    pub kind: TermKind,
    pub label: String,
}

impl BasisTerm {
    pub fn degree(&self) -> u32 {
        match &self.kind {
            TermKind::Monomial { exponents } => exponents.iter().sum(),
            _ => 0,
        }
    }
}

/// Ordered list of candidate terms over `state_arity` states and `input_arity` inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub terms: Vec<BasisTerm>,
    pub state_arity: usize,
    pub input_arity: usize,
    pub max_degree: u32,
    /// Variable names used in labels, states then inputs.
    pub variable_names: Vec<String>,
}

fn default_names(j: usize, s: usize) -> Vec<String> {
    (1..=j).map(|i| format!("x{i}")).chain((1..=s).map(|i| format!("u{i}"))).collect()
}

fn monomial_label(exponents: &[u32], names: &[String]) -> String {
    let parts: Vec<String> = exponents
        .iter()
        .zip(names)
        .filter(|(e, _)| **e > 0)
        .map(|(e, n)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("·")
    }
}

/// All monomials of total degree ≤ `max_degree` in graded-lex order, followed by one
/// delay-difference term per entry of `delay_indices`.
pub fn build_dictionary(
    state_arity: usize,
    input_arity: usize,
    max_degree: u32,
    delay_indices: &[usize],
) -> Result<Dictionary> {
    build_dictionary_named(state_arity, input_arity, max_degree, delay_indices, None)
}

/// As [`build_dictionary`], with custom variable names for the labels.
pub fn build_dictionary_named(
    state_arity: usize,
    input_arity: usize,
    max_degree: u32,
    delay_indices: &[usize],
    names: Option<Vec<String>>,
) -> Result<Dictionary> {
    if state_arity < 1 {
        return Err(invalid("state arity must be at least 1"));
    }
    if max_degree < 1 {
        return Err(invalid("maximum degree must be at least 1"));
    }
    let nvar = state_arity + input_arity;
    let names = names.unwrap_or_else(|| default_names(state_arity, input_arity));
    if names.len() != nvar {
        return Err(invalid(format!("expected {nvar} variable names, got {}", names.len())));
    }
    let mut terms = vec![BasisTerm { kind: TermKind::Constant, label: "1".into() }];
    for d in 1..=max_degree {
        for combo in (0..nvar).combinations_with_replacement(d as usize) {
            let mut exponents = vec![0u32; nvar];
            for v in combo {
                exponents[v] += 1;
            }
            let label = monomial_label(&exponents, &names);
            terms.push(BasisTerm { kind: TermKind::Monomial { exponents }, label });
        }
    }
    let mut dict = Dictionary { terms, state_arity, input_arity, max_degree, variable_names: names };
    for &j in delay_indices {
        dict.push_delay(j)?;
    }
    Ok(dict)
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label.clone()).collect()
    }

    /// Number of delay-difference terms, whose columns must be supplied at evaluation.
    pub fn delay_count(&self) -> usize {
        self.terms.iter().filter(|t| matches!(t.kind, TermKind::DelayDifference { .. })).count()
    }

    pub fn push_delay(&mut self, state: usize) -> Result<()> {
        if state >= self.state_arity {
            return Err(invalid(format!("delay index {state} out of range for {} states", self.state_arity)));
        }
        let n = &self.variable_names[state];
        self.push_term(BasisTerm {
            kind: TermKind::DelayDifference { state },
            label: format!("{n}(t-τ)-{n}(t)"),
        })
    }

    /// Appends a sine or cosine term.
    pub fn push_trig(&mut self, variable: usize, harmonic: u32, cosine: bool) -> Result<()> {
        if variable >= self.state_arity + self.input_arity {
            return Err(invalid(format!("variable {variable} out of range")));
        }
        let n = &self.variable_names[variable];
        let arg = if harmonic == 1 { n.clone() } else { format!("{harmonic}{n}") };
        let (kind, label) = if cosine {
            (TermKind::Cos { variable, harmonic }, format!("cos({arg})"))
        } else {
            (TermKind::Sin { variable, harmonic }, format!("sin({arg})"))
        };
        self.push_term(BasisTerm { kind, label })
    }

    fn push_term(&mut self, term: BasisTerm) -> Result<()> {
        if self.terms.iter().any(|t| t.kind == term.kind) {
            return Err(invalid(format!("duplicate term {}", term.label)));
        }
        self.terms.push(term);
        Ok(())
    }

    /// Value of term `p` at one sample. `delays` holds one value per delay term, in order.
    #[inline]
    pub fn eval_term(&self, p: usize, x: &[f64], u: &[f64], delays: &[f64]) -> f64 {
        let var = |v: usize| if v < self.state_arity { x[v] } else { u[v - self.state_arity] };
        match &self.terms[p].kind {
            TermKind::Constant => 1.0,
            TermKind::Monomial { exponents } => {
                let mut acc = 1.0;
                for (v, &e) in exponents.iter().enumerate() {
                    for _ in 0..e {
                        acc *= var(v);
                    }
                }
                acc
            }
            TermKind::DelayDifference { .. } => {
                let slot = self.terms[..p]
                    .iter()
                    .filter(|t| matches!(t.kind, TermKind::DelayDifference { .. }))
                    .count();
                delays[slot]
            }
            TermKind::Sin { variable, harmonic } => (*harmonic as f64 * var(*variable)).sin(),
            TermKind::Cos { variable, harmonic } => (*harmonic as f64 * var(*variable)).cos(),
        }
    }

    /// One row of the library matrix.
    pub fn evaluate_row(&self, x: &[f64], u: &[f64], delays: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|p| self.eval_term(p, x, u, delays)).collect()
    }

    /// Evaluates every term on every row of `x` (N×J) and `u` (N×S).
    pub fn evaluate(&self, x: &DMatrix<f64>, u: &DMatrix<f64>, delay_columns: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        if x.ncols() != self.state_arity {
            return Err(shape(format!("X has {} columns, dictionary expects {}", x.ncols(), self.state_arity)));
        }
        if u.ncols() != self.input_arity {
            return Err(shape(format!("U has {} columns, dictionary expects {}", u.ncols(), self.input_arity)));
        }
        if u.nrows() != n {
            return Err(shape(format!("X has {n} rows but U has {}", u.nrows())));
        }
        let nd = self.delay_count();
        if delay_columns.len() != nd {
            return Err(invalid(format!("dictionary has {nd} delay terms but {} delay columns were supplied", delay_columns.len())));
        }
        if let Some(c) = delay_columns.iter().find(|c| c.len() != n) {
            return Err(shape(format!("delay column has {} rows, expected {n}", c.len())));
        }
        let mut theta = DMatrix::zeros(n, self.len());
        let mut delay_slot = 0;
        for (p, term) in self.terms.iter().enumerate() {
            let mut col = theta.column_mut(p);
            match &term.kind {
                TermKind::Constant => col.fill(1.0),
                TermKind::Monomial { exponents } => {
                    col.fill(1.0);
                    for (v, &e) in exponents.iter().enumerate() {
                        if e == 0 {
                            continue;
                        }
                        let src = if v < self.state_arity { x.column(v) } else { u.column(v - self.state_arity) };
                        for i in 0..n {
                            col[i] *= src[i].powi(e as i32);
                        }
                    }
                }
                TermKind::DelayDifference { .. } => {
                    col.copy_from(&delay_columns[delay_slot]);
                    delay_slot += 1;
                }
                TermKind::Sin { variable, harmonic } | TermKind::Cos { variable, harmonic } => {
                    let src = if *variable < self.state_arity { x.column(*variable) } else { u.column(*variable - self.state_arity) };
                    let h = *harmonic as f64;
                    let is_sin = matches!(term.kind, TermKind::Sin { .. });
                    for i in 0..n {
                        col[i] = if is_sin { (h * src[i]).sin() } else { (h * src[i]).cos() };
                    }
                }
            }
        }
        Ok(theta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn term_counts() {
        assert_eq!(build_dictionary(3, 1, 2, &[]).unwrap().len(), 15);
        assert_eq!(build_dictionary(3, 0, 2, &[]).unwrap().len(), 10);
        let d = build_dictionary(1, 0, 1, &[]).unwrap();
        assert_eq!(d.labels(), vec!["1", "x1"]);
        assert_eq!(build_dictionary(3, 0, 2, &[0]).unwrap().len(), 11);
    }

    #[test]
    fn count_matches_binomial() {
        for (j, s, d) in [(2, 2, 3), (4, 0, 3), (1, 1, 5)] {
            let dict = build_dictionary(j, s, d, &[]).unwrap();
            let n = j + s + d as usize;
            let mut c = 1usize;
            for i in 0..d as usize {
                c = c * (n - i) / (i + 1);
            }
            assert_eq!(dict.len(), c);
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(build_dictionary(0, 1, 2, &[]).is_err());
        assert!(build_dictionary(2, 0, 0, &[]).is_err());
        assert!(build_dictionary(2, 0, 2, &[2]).is_err());
        assert!(build_dictionary(2, 0, 2, &[1, 1]).is_err());
    }

    #[test]
    fn canonical_row() {
        let d = build_dictionary(3, 1, 2, &[]).unwrap();
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let u = DMatrix::from_row_slice(1, 1, &[4.0]);
        let theta = d.evaluate(&x, &u, &[]).unwrap();
        let row: Vec<f64> = theta.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 4.0, 6.0, 8.0, 9.0, 12.0, 16.0]);
        assert_eq!(d.evaluate_row(&[1.0, 2.0, 3.0], &[4.0], &[]), row);
        assert_eq!(d.terms[6].label, "x1·x2");
        assert_eq!(d.terms[5].label, "x1^2");
    }

    #[test]
    fn shape_contract_and_errors() {
        let d = build_dictionary(3, 1, 2, &[]).unwrap();
        let x = DMatrix::from_fn(2000, 3, |i, j| (i * 3 + j) as f64 * 1e-3);
        let u = DMatrix::from_fn(2000, 1, |i, _| i as f64 * 1e-3);
        let theta = d.evaluate(&x, &u, &[]).unwrap();
        assert_eq!(theta.shape(), (2000, 15));
        assert!(theta.column(0).iter().all(|&v| v == 1.0));
        assert!(d.evaluate(&x, &DMatrix::zeros(10, 1), &[]).is_err());
        let dd = build_dictionary(1, 0, 1, &[0]).unwrap();
        assert!(dd.evaluate(&DMatrix::zeros(4, 1), &DMatrix::zeros(4, 0), &[]).is_err());
        let col = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let t = dd.evaluate(&DMatrix::zeros(4, 1), &DMatrix::zeros(4, 0), std::slice::from_ref(&col)).unwrap();
        assert_eq!(t.column(2), col.column(0));
    }

    #[test]
    fn trig_terms_evaluate() {
        let mut d = build_dictionary(1, 0, 1, &[]).unwrap();
        d.push_trig(0, 2, false).unwrap();
        d.push_trig(0, 1, true).unwrap();
        let r = d.evaluate_row(&[0.5], &[], &[]);
        assert_eq!(r[2], (1.0f64).sin());
        assert_eq!(r[3], (0.5f64).cos());
    }

    #[test]
    fn json_roundtrip() {
        let d = build_dictionary(2, 1, 2, &[1]).unwrap();
        let back: Dictionary = serde_json::from_str(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #[test]
        fn quadratic_columns_are_products(vals in proptest::collection::vec(-5.0f64..5.0, 40)) {
            let d = build_dictionary(3, 1, 2, &[]).unwrap();
            let x = DMatrix::from_fn(10, 3, |i, j| vals[i * 4 + j]);
            let u = DMatrix::from_fn(10, 1, |i, _| vals[i * 4 + 3]);
            let theta = d.evaluate(&x, &u, &[]).unwrap();
            let again = d.evaluate(&x, &u, &[]).unwrap();
            prop_assert_eq!(&theta, &again);
            for (p, term) in d.terms.iter().enumerate() {
                if let TermKind::Monomial { exponents } = &term.kind {
                    if exponents.iter().sum::<u32>() == 2 {
                        let idx: Vec<usize> = exponents.iter().enumerate()
                            .flat_map(|(v, &e)| std::iter::repeat_n(v + 1, e as usize)).collect();
                        for i in 0..10 {
                            prop_assert_eq!(theta[(i, p)], theta[(i, idx[0])] * theta[(i, idx[1])]);
                        }
                    }
                }
            }
        }
    }
}
