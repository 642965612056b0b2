//! Model predictive control with identified models, and stability-constrained
//! cutting-parameter selection for the turning process.

mod cutting;
mod mpc;
pub mod optim;
mod stability;

pub use cutting::{
    calibrate_threshold_factor, enumerate_cutting_grid, select_cutting_parameters, Calibration, CuttingResult, GridPoint,
    GridResult, IterationRecord, TurningOptConfig, DEFAULT_THRESHOLD_FACTOR,
};
pub use mpc::{run_closed_loop, solve_horizon, ClosedLoop, ControlSequence, MpcConfig, Reference};
pub use optim::{minimize_box, BoxOptions, BoxResult};
pub use stability::{fine_stability, rollout_metric, rollout_turning, stability_metric, FineOptions, FineVerdict, Rollout, RolloutStart};
