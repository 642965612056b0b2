use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sparsectl::plants::{simulate_turning, TurningParams};
use sparsectl::sysid::lorenz::{with_noisy_derivatives, LorenzDataOptions};
use sparsectl_bench::{
    output_dir, render_default_plots, render_plots, run_experiment, run_suite, ConfigError, ExperimentConfig, ExperimentKind,
    PlotKind, Suite,
};

#[derive(Parser)]
#[command(name = "sparsectl", version, about = "Sparse identification and predictive control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (JSON). Defaults to the reference settings for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long)]
    threads: Option<usize>,
    /// Also render SVG figures.
    #[arg(long)]
    plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Lorenz,
    Turning,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Setpoint,
    Track,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Timeseries,
    Lobes,
    Report,
}

#[derive(Subcommand)]
enum Command {
    /// Identify models from noisy simulated data and score their supports.
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "lorenz")]
        system: System,
    },
    /// Write a simulated training trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "lorenz")]
        system: System,
        /// Noise ratio on the derivatives (Lorenz only).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 400.0)]
        omega_rps: f64,
        #[arg(long, default_value_t = 2.0)]
        b_mm: f64,
    },
    /// Closed-loop predictive control of the Lorenz system with identified models.
    Mpc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "setpoint")]
        mode: Mode,
    },
    /// Receding-horizon selection of spindle speed and chip width.
    TurningOpt {
        #[command(flatten)]
        common: Common,
    },
    /// Stability lobes of identified or reference turning models.
    Lobes {
        #[command(flatten)]
        common: Common,
    },
    /// Run a suite (or a single experiment) into one subdirectory per experiment.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Run the built-in suite behind the reference tables and figures.
        #[arg(long, conflicts_with = "config")]
        paper_tables: bool,
    },
    /// Render SVG figures from a CSV artifact.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Optimization log or stability grid drawn over lobes.
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common, default: ExperimentKind, allowed: &[ExperimentKind]) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::preset(default),
    };
    if !allowed.contains(&cfg.experiment) {
        let names: Vec<&str> = allowed.iter().map(|k| k.as_str()).collect();
        bail!(ConfigError {
            issues: vec![sparsectl_bench::config::Issue {
                key: "experiment".into(),
                message: format!("{} is not handled by this command (expected one of {names:?})", cfg.experiment),
            }]
        });
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_one(common: &Common, cfg: ExperimentConfig) -> anyhow::Result<()> {
    let out = output_dir(&cfg, common.out.as_deref());
    let report = run_experiment(&cfg, &out)?;
    if common.plot {
        render_default_plots(&cfg, &out)?;
    }
    summarize(&cfg.name(), &out, &report);
    Ok(())
}

fn summarize(name: &str, out: &Path, report: &sparsectl_bench::ExperimentReport) {
    let failed = report.records.iter().filter(|r| r.status != sparsectl_bench::Status::Ok).count();
    println!("{name}: {} records ({failed} not ok) -> {}", report.records.len(), out.join("report.csv").display());
}

fn simulate(common: &Common, system: System, noise: f64, omega: f64, b_mm: f64) -> anyhow::Result<()> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out/simulate"));
    fs::create_dir_all(&out)?;
    let text = common.config.as_ref().map(fs::read_to_string).transpose()?;
    let path = out.join("trajectory.csv");
    match system {
        System::Lorenz => {
            let opts: LorenzDataOptions = text.map(|t| serde_json::from_str(&t)).transpose()?.unwrap_or_default();
            let clean = opts.simulate()?;
            let tr = if noise > 0.0 { with_noisy_derivatives(&clean, noise, common.seed.unwrap_or(0))? } else { clean };
            tr.write_csv(fs::File::create(&path)?)?;
        }
        System::Turning => {
            let p: TurningParams = text.map(|t| serde_json::from_str(&t)).transpose()?.unwrap_or_default();
            let tr = simulate_turning(&p, omega, b_mm * 1e-3)?;
            let mut wr = csv::Writer::from_path(&path)?;
            wr.write_record(["t", "y", "ydot", "yddot", "force", "delay"])?;
            for (i, t) in tr.times().iter().enumerate() {
                wr.write_record([t, &tr.y[i], &tr.ydot[i], &tr.yddot[i], &tr.force[i], &tr.delay[i]].map(|v| v.to_string()))?;
            }
            wr.flush()?;
        }
    }
    if common.plot {
        render_plots(&path, PlotKind::Timeseries, &out, None)?;
    }
    println!("trajectory -> {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = match &cli.command {
        Command::Identify { common, .. }
        | Command::Simulate { common, .. }
        | Command::Mpc { common, .. }
        | Command::TurningOpt { common }
        | Command::Lobes { common }
        | Command::Bench { common, .. } => common.threads,
        Command::Plot { .. } => None,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Identify { common, system } => {
            let (default, allowed) = match system {
                System::Lorenz => (ExperimentKind::LorenzIdentify, [ExperimentKind::LorenzIdentify, ExperimentKind::TurningIdentify]),
                System::Turning => (ExperimentKind::TurningIdentify, [ExperimentKind::LorenzIdentify, ExperimentKind::TurningIdentify]),
            };
            let cfg = load_config(&common, default, &allowed)?;
            run_one(&common, cfg)
        }
        Command::Simulate { common, system, noise, omega_rps, b_mm } => simulate(&common, system, noise, omega_rps, b_mm),
        Command::Mpc { common, mode } => {
            let default = match mode {
                Mode::Setpoint => ExperimentKind::LorenzSetpoint,
                Mode::Track => ExperimentKind::LorenzTrack,
            };
            let cfg = load_config(&common, default, &[ExperimentKind::LorenzSetpoint, ExperimentKind::LorenzTrack])?;
            run_one(&common, cfg)
        }
        Command::TurningOpt { common } => {
            let cfg = load_config(&common, ExperimentKind::TurningOptimize, &[ExperimentKind::TurningOptimize])?;
            run_one(&common, cfg)
        }
        Command::Lobes { common } => {
            let cfg = load_config(&common, ExperimentKind::Lobes, &[ExperimentKind::Lobes])?;
            run_one(&common, cfg)
        }
        Command::Bench { common, paper_tables } => {
            let suite = if paper_tables {
                Suite::paper_tables()
            } else {
                let p = common.config.as_ref().context("bench needs --config or --paper-tables")?;
                Suite::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
            };
            let root = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            for (name, report) in run_suite(&suite, &root, common.seed, common.plot)? {
                summarize(&name, &root.join(&name), &report);
            }
            Ok(())
        }
        Command::Plot { input, kind, overlay, out } => {
            let kind = match kind {
                Kind::Timeseries => PlotKind::Timeseries,
                Kind::Lobes => PlotKind::Lobes,
                Kind::Report => PlotKind::Report,
            };
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            fs::create_dir_all(&dir)?;
            for f in render_plots(&input, kind, &dir, overlay.as_deref())? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = match e.downcast_ref::<ConfigError>() {
                Some(c) => json!({ "error": "invalid_config", "message": c.to_string(), "issues": c.issues }),
                None => json!({ "error": "failed", "message": format!("{e:#}") }),
            };
            eprintln!("{body}");
            ExitCode::from(if e.is::<ConfigError>() { 2 } else { 1 })
        }
    }
}
