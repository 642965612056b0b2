use serde::{Deserialize, Serialize};

use super::Dynamics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub alpha: f64,
    pub beta_lorenz: f64,
    pub rho: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self { alpha: 10.0, beta_lorenz: 8.0 / 3.0, rho: 28.0 }
    }
}

impl LorenzParams {
    /// The two non-trivial equilibria `(±√(β(ρ−1)), ±√(β(ρ−1)), ρ−1)`.
    pub fn fixed_points(&self) -> [[f64; 3]; 2] {
        let a = (self.beta_lorenz * (self.rho - 1.0)).sqrt();
        [[a, a, self.rho - 1.0], [-a, -a, self.rho - 1.0]]
    }
}

/// Lorenz right-hand side with additive control on the first state.
pub fn lorenz_rhs(x: &[f64; 3], u: f64, p: &LorenzParams) -> [f64; 3] {
    [
        p.alpha * (x[1] - x[0]) + u,
        x[0] * (p.rho - x[2]) - x[1],
        x[0] * x[1] - p.beta_lorenz * x[2],
    ]
}

impl Dynamics for LorenzParams {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let r = lorenz_rhs(&[x[0], x[1], x[2]], u[0], self);
        dx.copy_from_slice(&r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_examples() {
        let p = LorenzParams::default();
        let r = lorenz_rhs(&[-8.0, 8.0, 27.0], 0.0, &p);
        assert_eq!(r[0], 160.0);
        assert_eq!(r[1], -16.0);
        assert!((r[2] + 136.0).abs() < 1e-12);
        let r5 = lorenz_rhs(&[-8.0, 8.0, 27.0], 5.0, &p);
        assert_eq!(r5[0], 165.0);
        assert_eq!(r5[1], r[1]);
        assert_eq!(r5[2], r[2]);
    }

    #[test]
    fn fixed_points_are_equilibria() {
        let p = LorenzParams::default();
        let s = 72f64.sqrt();
        for fp in p.fixed_points().iter().chain([[-s, -s, 27.0]].iter()) {
            let r = lorenz_rhs(fp, 0.0, &p);
            assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
        }
    }
}
