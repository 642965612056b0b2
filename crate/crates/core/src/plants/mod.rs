//! Data generators: the controlled Lorenz system, the regenerative turning
//! process, excitation signals, noise and numerical derivatives.

mod derivative;
mod lorenz;
mod noise;
mod ode;
mod signal;
mod trajectory;
mod turning;

pub use derivative::finite_difference_derivatives;
pub use lorenz::{lorenz_rhs, LorenzParams};
pub use noise::{inject_noise, inject_noise_matrix, noise_rng};
pub use ode::{integrate_ode, rk4_step, euler_step, Method};
pub use signal::{InputSource, Signal};
pub use trajectory::Trajectory;
pub use turning::{simulate_turning, simulate_turning_from, DelayLine, TurningParams, TurningTrajectory};

/// A continuous-time system `ẋ = f(x, u)`.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
}

/// Adapts a closure into [`Dynamics`].
pub struct FnDynamics<F> {
    pub states: usize,
    pub inputs: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64], &mut [f64]) + Sync> Dynamics for FnDynamics<F> {
    fn state_dim(&self) -> usize {
        self.states
    }

    fn input_dim(&self) -> usize {
        self.inputs
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.f)(x, u, dx)
    }
}
