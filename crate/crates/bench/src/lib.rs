//! Experiment harness for `sparsectl`: JSON experiment configs, a versioned CSV report per
//! run, identified models as JSON, and SVG figures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

use std::path::Path;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, Method, Suite};
pub use plot::{render_plots, PlotKind};
pub use report::{ExperimentReport, Record, Status};
pub use run::{output_dir, render_default_plots, run_experiment};

/// Runs every experiment of `suite` into `out_root/<name>`, optionally overriding the seed.
pub fn run_suite(suite: &Suite, out_root: &Path, seed: Option<u64>, plot: bool) -> anyhow::Result<Vec<(String, ExperimentReport)>> {
    let mut reports = Vec::new();
    for cfg in &suite.experiments {
        let mut cfg = cfg.clone();
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let dir = out_root.join(cfg.name());
        let report = run_experiment(&cfg, &dir)?;
        if plot {
            render_default_plots(&cfg, &dir)?;
        }
        reports.push((cfg.name(), report));
    }
    Ok(reports)
}
