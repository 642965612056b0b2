use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Central differences inside, second-order one-sided differences at both ends.
pub fn finite_difference_derivatives(x: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 3 {
        return Err(invalid(format!("need at least 3 samples, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let mut d = DMatrix::zeros(n, x.ncols());
    for j in 0..x.ncols() {
        let c = x.column(j);
        d[(0, j)] = (4.0 * (c[1] - c[0]) - (c[2] - c[0])) / (2.0 * dt);
        for i in 1..n - 1 {
            d[(i, j)] = (c[i + 1] - c[i - 1]) / (2.0 * dt);
        }
        d[(n - 1, j)] = (4.0 * (c[n - 1] - c[n - 2]) - (c[n - 1] - c[n - 3])) / (2.0 * dt);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratics() {
        let dt = 0.1;
        let x = DMatrix::from_fn(20, 1, |i, _| (i as f64 * dt).powi(2));
        let d = finite_difference_derivatives(&x, dt).unwrap();
        for i in 0..20 {
            assert!((d[(i, 0)] - 2.0 * i as f64 * dt).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        let d = finite_difference_derivatives(&DMatrix::from_element(5, 2, 3.3), 0.5).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(finite_difference_derivatives(&DMatrix::zeros(2, 1), 0.1).is_err());
    }

    #[test]
    fn sine_truncation_error() {
        let dt = 1e-3;
        let x = DMatrix::from_fn(5000, 1, |i, _| (i as f64 * dt).sin());
        let d = finite_difference_derivatives(&x, dt).unwrap();
        let err = (0..5000).map(|i| (d[(i, 0)] - (i as f64 * dt).cos()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }
}
