use nalgebra::DMatrix;

use crate::error::{invalid, shape, Result};
use crate::plants::Trajectory;

/// Number of equations whose identified support equals the reference support exactly.
///
/// Both arguments hold one flag vector per equation.
pub fn support_accuracy(gamma_hat: &[Vec<bool>], gamma_truth: &[Vec<bool>]) -> Result<usize> {
    if gamma_hat.len() != gamma_truth.len() {
        return Err(shape(format!("{} vs {} equations", gamma_hat.len(), gamma_truth.len())));
    }
    let mut count = 0;
    for (a, b) in gamma_hat.iter().zip(gamma_truth) {
        if a.len() != b.len() {
            return Err(shape(format!("{} vs {} terms", a.len(), b.len())));
        }
        if a == b {
            count += 1;
        }
    }
    Ok(count)
}

/// Mean squared tracking error over rows `n0+1 ..= n0+nf`, restricted to `dims`.
pub fn steady_state_error_matrix(states: &DMatrix<f64>, reference: &DMatrix<f64>, n0: usize, nf: usize, dims: &[usize]) -> Result<f64> {
    if dims.is_empty() {
        return Err(invalid("no tracked dimensions"));
    }
    if nf == 0 {
        return Err(invalid("window must be non-empty"));
    }
    if states.shape() != reference.shape() {
        return Err(shape("states and reference differ in shape"));
    }
    if n0 + nf >= states.nrows() {
        return Err(invalid(format!("window ends at row {} but only {} rows exist", n0 + nf, states.nrows())));
    }
    if let Some(&d) = dims.iter().find(|&&d| d >= states.ncols()) {
        return Err(invalid(format!("dimension {d} out of range")));
    }
    let mut sum = 0.0;
    for k in n0 + 1..=n0 + nf {
        for &d in dims {
            let e = states[(k, d)] - reference[(k, d)];
            sum += e * e;
        }
    }
    Ok(sum / (nf * dims.len()) as f64)
}

/// [`steady_state_error_matrix`] with the reference evaluated on the trajectory's time grid.
pub fn steady_state_error(traj: &Trajectory, reference: impl Fn(f64) -> Vec<f64>, n0: usize, nf: usize, dims: &[usize]) -> Result<f64> {
    let j = traj.state_dim();
    let mut r = DMatrix::zeros(traj.len(), j);
    for (i, &t) in traj.times.iter().enumerate() {
        let v = reference(t);
        if v.len() != j {
            return Err(shape(format!("reference has {} entries, state has {j}", v.len())));
        }
        for c in 0..j {
            r[(i, c)] = v[c];
        }
    }
    steady_state_error_matrix(&traj.x, &r, n0, nf, dims)
}

/// `h_m Ω b` in mm²·rps, from SI chip thickness and width (m) and Ω in rev/s.
pub fn material_removal_rate(hm: f64, omega: f64, b: f64) -> f64 {
    (hm * 1e3) * omega * (b * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        let a = vec![vec![true, false, true], vec![false, true, false]];
        assert_eq!(support_accuracy(&a, &a).unwrap(), 2);
        let mut b = a.clone();
        b[1][0] = true;
        assert_eq!(support_accuracy(&a, &b).unwrap(), 1);
        assert!(support_accuracy(&a, &a[..1]).is_err());
    }

    #[test]
    fn ess_examples() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        assert_eq!(steady_state_error_matrix(&x, &x, 2, 5, &[0, 1]).unwrap(), 0.0);
        let off = x.map(|v| v + 0.3);
        assert!((steady_state_error_matrix(&off, &x, 2, 5, &[0, 1]).unwrap() - 0.09).abs() < 1e-12);
        assert!(steady_state_error_matrix(&x, &x, 5, 5, &[0]).is_err());
        assert!(steady_state_error_matrix(&x, &x, 1, 5, &[]).is_err());
    }

    #[test]
    fn mrr_examples() {
        assert!((material_removal_rate(1e-4, 600.0, 0.002) - 120.0).abs() < 1e-9);
        assert!((material_removal_rate(1e-4, 800.0, 0.008) - 640.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn accuracy_symmetric_and_bounded(a in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 3),
                                          b in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 3)) {
            let ab = support_accuracy(&a, &b).unwrap();
            prop_assert_eq!(ab, support_accuracy(&b, &a).unwrap());
            prop_assert!(ab <= 3);
        }

        #[test]
        fn mrr_multilinear(h in 1e-5f64..1e-3, w in 10.0f64..1000.0, b in 1e-4f64..1e-2) {
            let base = material_removal_rate(h, w, b);
            prop_assert!((material_removal_rate(2.0 * h, w, b) / base - 2.0).abs() < 1e-12);
            prop_assert!((material_removal_rate(h, 2.0 * w, b) / base - 2.0).abs() < 1e-12);
            prop_assert!((material_removal_rate(h, w, 2.0 * b) / base - 2.0).abs() < 1e-12);
        }

        #[test]
        fn ess_nonnegative(vals in proptest::collection::vec(-10.0f64..10.0, 24)) {
            let x = DMatrix::from_fn(12, 2, |i, j| vals[i * 2 + j]);
            let r = DMatrix::from_fn(12, 2, |i, j| vals[23 - (i * 2 + j)]);
            prop_assert!(steady_state_error_matrix(&x, &r, 3, 8, &[0, 1]).unwrap() >= 0.0);
        }
    }
}
