use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::linalg::{least_squares, select_columns};

/// Least-squares coefficients restricted to a support.
#[derive(Clone, Debug)]
pub struct CoefficientFit {
    /// Full-length coefficient vector; zero outside the support.
    pub xi: DVector<f64>,
    /// Set when the selected columns were numerically dependent.
    pub ridge_fallback: bool,
}

/// Refits the selected columns by ordinary least squares on the original scale.
pub fn fit_coefficients(theta: &DMatrix<f64>, target: &DVector<f64>, gamma: &[bool]) -> Result<CoefficientFit> {
    let p = theta.ncols();
    if gamma.len() != p {
        return Err(shape(format!("gamma has {} entries, theta has {p} columns", gamma.len())));
    }
    if target.len() != theta.nrows() {
        return Err(shape(format!("theta has {} rows but target has {}", theta.nrows(), target.len())));
    }
    let cols: Vec<usize> = (0..p).filter(|&j| gamma[j]).collect();
    if cols.is_empty() {
        return Err(invalid("support is empty"));
    }
    let ls = least_squares(&select_columns(theta, &cols), target);
    let mut xi = DVector::zeros(p);
    for (i, &j) in cols.iter().enumerate() {
        xi[j] = ls.solution[i];
    }
    Ok(CoefficientFit { xi, ridge_fallback: ls.ridge_fallback })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StlsqResult {
    pub gamma: Vec<bool>,
    pub xi: DVector<f64>,
    pub iterations: usize,
    /// Every coefficient fell below the threshold.
    pub empty: bool,
}

/// Sequentially thresholded least squares.
pub fn stlsq_baseline(theta: &DMatrix<f64>, target: &DVector<f64>, threshold: f64, max_iters: usize) -> Result<StlsqResult> {
    if !(threshold >= 0.0) {
        return Err(invalid("threshold must be non-negative"));
    }
    let p = theta.ncols();
    let mut gamma = vec![true; p];
    let mut xi = fit_coefficients(theta, target, &gamma)?.xi;
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let next: Vec<bool> = (0..p).map(|j| gamma[j] && xi[j].abs() >= threshold).collect();
        if next.iter().all(|g| !g) {
            return Ok(StlsqResult { gamma: next, xi: DVector::zeros(p), iterations, empty: true });
        }
        if next == gamma {
            break;
        }
        gamma = next;
        xi = fit_coefficients(theta, target, &gamma)?.xi;
    }
    Ok(StlsqResult { gamma, xi, iterations, empty: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_column_gives_mean() {
        let theta = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_element(6, 5.0);
        let fit = fit_coefficients(&theta, &y, &[true, false]).unwrap();
        assert_relative_eq!(fit.xi[0], 5.0, epsilon = 1e-12);
        assert_eq!(fit.xi[1], 0.0);
        assert!(fit_coefficients(&theta, &y, &[false, false]).is_err());
    }

    #[test]
    fn residual_orthogonal_to_selected_columns() {
        let theta = DMatrix::from_fn(50, 4, |i, j| ((i as f64) * (0.3 + j as f64)).sin() + j as f64);
        let y = DVector::from_fn(50, |i, _| (i as f64 * 0.17).cos());
        let gamma = [true, false, true, true];
        let fit = fit_coefficients(&theta, &y, &gamma).unwrap();
        let r = &y - &theta * &fit.xi;
        for j in [0, 2, 3] {
            let c = theta.column(j);
            assert!(c.dot(&r).abs() <= 1e-8 * c.norm() * y.norm());
        }
    }

    #[test]
    fn stlsq_zero_threshold_is_least_squares() {
        let theta = DMatrix::from_fn(30, 3, |i, j| ((i * (j + 1)) % 5) as f64 + j as f64 * 0.1);
        let y = DVector::from_fn(30, |i, _| i as f64 * 0.2 - 1.0);
        let s = stlsq_baseline(&theta, &y, 0.0, 10).unwrap();
        assert!(s.gamma.iter().all(|&g| g));
        let ls = fit_coefficients(&theta, &y, &[true; 3]).unwrap();
        assert_eq!(s.xi, ls.xi);
    }

    #[test]
    fn stlsq_all_thresholded_is_flagged() {
        let theta = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y = DVector::from_fn(10, |i, _| 1e-3 * i as f64);
        let s = stlsq_baseline(&theta, &y, 10.0, 10).unwrap();
        assert!(s.empty);
        assert!(s.gamma.iter().all(|g| !g));
    }
}
