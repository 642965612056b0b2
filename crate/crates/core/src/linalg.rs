//! Small dense least-squares kernels shared by the regression and control code.

use nalgebra::{DMatrix, DVector};

/// Result of an ordinary least-squares solve.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub solution: DVector<f64>,
    /// Numerical rank after column scaling.
    pub rank: usize,
    /// True when the system was rank deficient and a minimal ridge term was added.
    pub ridge_fallback: bool,
}

/// Least squares via column equilibration and SVD.
///
/// Rank-deficient systems are solved with a ridge perturbation of relative size
/// `1e-12` on the squared singular values, which selects a bounded solution and
/// is reported through `ridge_fallback`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> LeastSquares {
    let (n, k) = a.shape();
    if k == 0 {
        return LeastSquares { solution: DVector::zeros(0), rank: 0, ridge_fallback: false };
    }
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = a.column(j).norm();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let tol = (n.max(k) as f64) * f64::EPSILON * smax;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let ridge_fallback = rank < k;
    let delta = if ridge_fallback { 1e-12 * smax * smax } else { 0.0 };

    let utb = u.transpose() * b;
    let mut z = DVector::zeros(k);
    for i in 0..sv.len() {
        let s = sv[i];
        let w = if ridge_fallback { s / (s * s + delta) } else { 1.0 / s };
        if s > 0.0 || ridge_fallback {
            z[i] = if w.is_finite() { w * utb[i] } else { 0.0 };
        }
    }
    let mut solution = vt.transpose() * z;
    for (j, s) in scales.iter().enumerate() {
        solution[j] /= s;
    }
    LeastSquares { solution, rank, ridge_fallback }
}

/// A ridge fit restricted to a box `|x_i| <= bound`.
#[derive(Clone, Debug)]
pub struct RidgeFit {
    pub coefficients: DVector<f64>,
    /// `‖b − A x‖² + λ‖x‖²`.
    pub objective: f64,
    /// True when the box constraint was active at the solution.
    pub box_active: bool,
}

/// Minimizes `‖b − A x‖² + λ‖x‖²` subject to `|x_i| ≤ bound`.
///
/// The unconstrained problem is solved by QR of the augmented system
/// `[A; √λ I] x ≈ [b; 0]`. If the result leaves the box, a projected coordinate
/// descent on the normal equations finishes the job.
pub fn ridge_box(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, bound: f64) -> RidgeFit {
    let (n, k) = a.shape();
    if k == 0 {
        return RidgeFit { coefficients: DVector::zeros(0), objective: b.norm_squared(), box_active: false };
    }
    let x = if lambda > 0.0 {
        let mut aug = DMatrix::zeros(n + k, k);
        aug.view_mut((0, 0), (n, k)).copy_from(a);
        let sl = lambda.sqrt();
        for j in 0..k {
            aug[(n + j, j)] = sl;
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(b);
        let qr = aug.qr();
        let qtb = qr.q().transpose() * rhs;
        let r = qr.r();
        match r.solve_upper_triangular(&qtb) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x,
            _ => least_squares(a, b).solution,
        }
    } else {
        least_squares(a, b).solution
    };

    if x.iter().all(|v| v.abs() <= bound) {
        let objective = ridge_objective(a, b, &x, lambda);
        return RidgeFit { coefficients: x, objective, box_active: false };
    }
    let x = box_coordinate_descent(a, b, lambda, bound, x);
    let objective = ridge_objective(a, b, &x, lambda);
    RidgeFit { coefficients: x, objective, box_active: true }
}

pub fn ridge_objective(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    let r = b - a * x;
    r.norm_squared() + lambda * x.norm_squared()
}

fn box_coordinate_descent(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    bound: f64,
    start: DVector<f64>,
) -> DVector<f64> {
    let k = a.ncols();
    let mut g = a.transpose() * a;
    for j in 0..k {
        g[(j, j)] += lambda;
    }
    let c = a.transpose() * b;
    let mut x = start.map(|v| v.clamp(-bound, bound));
    for _ in 0..100_000 {
        let mut max_change: f64 = 0.0;
        for j in 0..k {
            if g[(j, j)] <= 0.0 {
                continue;
            }
            let mut s = c[j];
            for i in 0..k {
                if i != j {
                    s -= g[(j, i)] * x[i];
                }
            }
            let new = (s / g[(j, j)]).clamp(-bound, bound);
            max_change = max_change.max((new - x[j]).abs());
            x[j] = new;
        }
        if max_change <= 1e-15 * bound.max(1.0) {
            break;
        }
    }
    x
}

/// Sample standard deviation (ddof = 1). Returns 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Extracts the listed columns, in the given order.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn least_squares_exact_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let ls = least_squares(&a, &b);
        assert!(!ls.ridge_fallback);
        assert_relative_eq!(ls.solution[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ls.solution[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_duplicate_columns_flags_fallback() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let ls = least_squares(&a, &b);
        assert!(ls.ridge_fallback);
        assert_eq!(ls.rank, 1);
        assert_relative_eq!(ls.solution[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(ls.solution[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.1, -2.0, 1.5]);
        let b = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.3]);
        let lambda = 0.7;
        let fit = ridge_box(&a, &b, lambda, 1e6);
        let mut g = a.transpose() * &a;
        g[(0, 0)] += lambda;
        g[(1, 1)] += lambda;
        let x = g.lu().solve(&(a.transpose() * &b)).unwrap();
        assert_relative_eq!(fit.coefficients, x, epsilon = 1e-12);
        assert!(!fit.box_active);
    }

    #[test]
    fn ridge_box_clamps() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![10.0, 10.0]);
        let fit = ridge_box(&a, &b, 0.0, 2.0);
        assert!(fit.box_active);
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.objective, 128.0, epsilon = 1e-9);
    }

    #[test]
    fn std_ddof_one() {
        assert_relative_eq!(sample_std(&[1.0, 2.0, 3.0, 4.0]), (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }
}
