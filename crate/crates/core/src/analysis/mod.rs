//! Evaluation metrics and frequency-domain stability lobes.

mod lobes;
mod metrics;

pub use lobes::{analytic_critical_depth, default_frequency_grid, stability_lobes, stability_lobes_for_model, Lobe, LobeDiagram, LobePoint};
pub use metrics::{material_removal_rate, steady_state_error, steady_state_error_matrix, support_accuracy};
