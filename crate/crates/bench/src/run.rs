//! Runs one configured experiment end to end and writes its artifacts:
//! `config.json`, `report.csv`, `models/`, and per-kind CSVs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;
use sparsectl::analysis::{default_frequency_grid, stability_lobes_for_model, steady_state_error_matrix, support_accuracy};
use sparsectl::basis::{build_dictionary, Dictionary};
use sparsectl::control::{
    enumerate_cutting_grid, rollout_turning, run_closed_loop, select_cutting_parameters, CuttingResult, RolloutStart, TurningOptConfig,
};
use sparsectl::plants::{simulate_turning, Trajectory, TurningTrajectory};
use sparsectl::sysid::lorenz::{stlsq_model, truth_gamma, with_noisy_derivatives};
use sparsectl::sysid::turning::{identify_turning, stlsq_turning, TurningIdentification, TurningIdentifyOptions, TurningModel};
use sparsectl::sysid::{identify_model, IdentifyOptions, SparseModel};
use sparsectl::Error as CoreError;

use crate::config::{Cut, ExperimentConfig, ExperimentKind, Method};
use crate::report::{ExperimentReport, Record, Status};

/// Resolves the output directory: explicit override, then the config, then `out/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.name()))
}

/// Runs `cfg`, writing everything under `out`. Trials run on the current rayon pool and are
/// merged in a fixed order, so the report does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(out.join("models")).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    let records = match cfg.experiment {
        ExperimentKind::LorenzIdentify | ExperimentKind::LorenzSetpoint | ExperimentKind::LorenzTrack => lorenz(cfg, out)?,
        ExperimentKind::TurningIdentify => turning_identify(cfg, out)?,
        ExperimentKind::TurningOptimize | ExperimentKind::Lobes => turning_model_runs(cfg, out)?,
    };
    let report = ExperimentReport::new(cfg.clone(), records);
    let f = File::create(out.join("report.csv"))?;
    report.write_csv(BufWriter::new(f))?;
    Ok(report)
}

fn stem(method: Method, case: &str, r: f64, seed: u64) -> String {
    if case.is_empty() {
        format!("{}_r{r}_s{seed}", method.as_str())
    } else {
        format!("{}_{case}_r{r}_s{seed}", method.as_str())
    }
}

fn write_json(out: &Path, rel: &str, value: &serde_json::Value) -> anyhow::Result<String> {
    fs::write(out.join(rel), serde_json::to_string_pretty(value)?)?;
    Ok(rel.to_string())
}

fn grid<T: Clone + Send + Sync>(cfg: &ExperimentConfig, cases: &[T]) -> Vec<(f64, u64, T, Method)> {
    let mut jobs = Vec::new();
    for &r in &cfg.noise_ratios {
        for seed in cfg.seeds() {
            for c in cases {
                for &m in &cfg.methods {
                    jobs.push((r, seed, c.clone(), m));
                }
            }
        }
    }
    jobs
}

fn lorenz(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<Record>> {
    let dict = build_dictionary(3, 1, cfg.dictionary.max_degree, &[])?;
    let clean = cfg.lorenz.simulate()?;
    let control = cfg.experiment != ExperimentKind::LorenzIdentify;
    let x0 = if control { Some(cfg.lorenz.control_start()?) } else { None };
    if control {
        fs::create_dir_all(out.join("closed_loop"))?;
    }
    let jobs = grid(cfg, &[()]);
    let records = jobs
        .par_iter()
        .map(|&(r, seed, (), method)| {
            let t = Instant::now();
            let mut rec = Record::new(cfg.experiment.as_str(), method, String::new(), r, seed);
            let res = lorenz_trial(cfg, out, &dict, &clean, x0, r, seed, method, &mut rec);
            if let Err(e) = res {
                rec = rec.failed(e.to_string());
            }
            rec.wall_time_s = t.elapsed().as_secs_f64();
            rec
        })
        .collect();
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn lorenz_trial(
    cfg: &ExperimentConfig,
    out: &Path,
    dict: &Dictionary,
    clean: &Trajectory,
    x0: Option<[f64; 3]>,
    r: f64,
    seed: u64,
    method: Method,
    rec: &mut Record,
) -> anyhow::Result<()> {
    let data = with_noisy_derivatives(clean, r, seed)?;
    let model: SparseModel = match method {
        Method::Pimlc => {
            let opts = IdentifyOptions { parallel: false, ..Default::default() };
            identify_model(&data, dict, &cfg.lorenz_kappas(), &opts)?
        }
        _ => stlsq_model(&data, dict, cfg.stlsq_threshold, cfg.stlsq_max_iters)?,
    };
    let name = stem(method, "", r, seed);
    rec.accuracy = Some(support_accuracy(&model.gamma_matrix(), &truth_gamma(dict.len()))?);
    let value = json!({ "model": model, "equations": model.render() });
    rec.model_path = Some(write_json(out, &format!("models/{name}.json"), &value)?);
    let failed = model.failed_equations();
    if !failed.is_empty() {
        *rec = rec.clone().failed(format!("equations {failed:?} could not be identified"));
        return Ok(());
    }
    let Some(x0) = x0 else { return Ok(()) };
    let mpc = cfg.mpc_config();
    let cl = run_closed_loop(&cfg.lorenz.params, &model, &mpc, &x0, cfg.mpc_duration)?;
    cl.write_csv(BufWriter::new(File::create(out.join(format!("closed_loop/{name}.csv")))?))?;
    if cl.diverged {
        rec.status = Status::Diverged;
        rec.e_ss = Some(f64::NAN);
        return Ok(());
    }
    let n = cl.trajectory.x.nrows();
    let nf = (cfg.steady_window / mpc.dt_sys).round() as usize;
    anyhow::ensure!(nf >= 1 && nf < n, "steady window of {nf} samples does not fit a run of {n}");
    rec.e_ss = Some(steady_state_error_matrix(&cl.trajectory.x, &cl.reference, n - 1 - nf, nf, &cfg.dims())?);
    Ok(())
}

fn identify_options(cfg: &ExperimentConfig, r: f64, seed: u64) -> TurningIdentifyOptions {
    let (structural_kappa, force_kappa) = cfg.turning_kappas();
    TurningIdentifyOptions {
        n_train: cfg.turning.n_train,
        noise_ratio: r,
        seed,
        noise_channels: cfg.turning.noise_channels,
        structural_kappa,
        force_kappa,
        ..Default::default()
    }
}

fn identify_cut(cfg: &ExperimentConfig, tr: &TurningTrajectory, r: f64, seed: u64, method: Method) -> anyhow::Result<TurningIdentification> {
    let opts = identify_options(cfg, r, seed);
    Ok(match method {
        Method::Pimlc => identify_turning(tr, &opts)?,
        _ => stlsq_turning(tr, &opts, cfg.stlsq_threshold, cfg.stlsq_max_iters)?,
    })
}

fn turning_identify(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<Record>> {
    let sims: Vec<TurningTrajectory> = cfg
        .turning
        .cuts
        .par_iter()
        .map(|c| simulate_turning(&cfg.turning.params, c.omega_rps, c.b_m()))
        .collect::<Result<_, _>>()?;
    let idx: Vec<usize> = (0..sims.len()).collect();
    let jobs = grid(cfg, &idx);
    Ok(jobs
        .par_iter()
        .map(|&(r, seed, i, method)| {
            let t = Instant::now();
            let case = cfg.turning.cuts[i].label();
            let mut rec = Record::new(cfg.experiment.as_str(), method, case.clone(), r, seed);
            let res = (|| -> anyhow::Result<()> {
                let id = identify_cut(cfg, &sims[i], r, seed, method)?;
                rec.accuracy = Some(id.support_correct() as usize);
                let value = json!({ "identification": id, "model": id.model, "rendered": id.model.map(|m| m.render()) });
                rec.model_path = Some(write_json(out, &format!("models/{}.json", stem(method, &case, r, seed)), &value)?);
                Ok(())
            })();
            if let Err(e) = res {
                rec = rec.failed(e.to_string());
            }
            rec.wall_time_s = t.elapsed().as_secs_f64();
            rec
        })
        .collect())
}

fn turning_model_runs(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<Record>> {
    let training = &cfg.turning.training_cut;
    let needs_data = cfg.methods.iter().any(|m| matches!(m, Method::Pimlc | Method::Stlsq));
    let sim = if needs_data { Some(simulate_turning(&cfg.turning.params, training.omega_rps, training.b_m())?) } else { None };
    let sub = if cfg.experiment == ExperimentKind::Lobes { "lobes" } else { "turning" };
    fs::create_dir_all(out.join(sub))?;
    let jobs = grid(cfg, &[()]);
    Ok(jobs
        .par_iter()
        .map(|&(r, seed, (), method)| {
            let t = Instant::now();
            let mut rec = Record::new(cfg.experiment.as_str(), method, training.label(), r, seed);
            let name = stem(method, &training.label(), r, seed);
            let res = (|| -> anyhow::Result<()> {
                let (model, id) = match method {
                    Method::Truth => (TurningModel::from_params(&cfg.turning.params), None),
                    Method::Given => (cfg.turning.model.context("no given model")?, None),
                    _ => {
                        let id = identify_cut(cfg, sim.as_ref().expect("simulated"), r, seed, method)?;
                        rec.accuracy = Some(id.support_correct() as usize);
                        (id.model.context("identified support does not match the equation of motion")?, Some(id))
                    }
                };
                let value = json!({ "model": model, "rendered": model.render(), "identification": id });
                rec.model_path = Some(write_json(out, &format!("models/{name}.json"), &value)?);
                if cfg.experiment == ExperimentKind::Lobes {
                    lobes_trial(cfg, out, &model, &name, &mut rec)
                } else {
                    optimize_trial(cfg, out, &model, &name, &mut rec)
                }
            })();
            if let Err(e) = res {
                let msg = e.to_string();
                rec = match e.downcast_ref::<CoreError>() {
                    Some(CoreError::Infeasible { min_violation }) => {
                        rec.metric_m = Some(*min_violation);
                        Record { status: Status::Infeasible, error: Some(msg), ..rec }
                    }
                    _ => rec.failed(msg),
                };
            }
            rec.wall_time_s = t.elapsed().as_secs_f64();
            rec
        })
        .collect())
}

fn lobes_trial(cfg: &ExperimentConfig, out: &Path, model: &TurningModel, name: &str, rec: &mut Record) -> anyhow::Result<()> {
    let t = &cfg.turning;
    let freqs = default_frequency_grid(model.m, model.k, t.frequency_points, t.frequency_upper_ratio);
    let lobes = stability_lobes_for_model(model, t.params.beta_force, &t.lobe_indices, &freqs)?;
    lobes.write_csv(BufWriter::new(File::create(out.join(format!("lobes/{name}.csv")))?))?;
    rec.b_mm = Some(lobes.critical_depth() * 1e3);
    Ok(())
}

fn optimize_trial(cfg: &ExperimentConfig, out: &Path, model: &TurningModel, name: &str, rec: &mut Record) -> anyhow::Result<()> {
    let o = &cfg.turning.optimizer;
    let start: &Cut = &cfg.turning.start;
    let res = select_cutting_parameters(model, o, (start.omega_rps, start.b_m()))?;
    res.write_log_csv(BufWriter::new(File::create(out.join(format!("turning/{name}_log.csv")))?))?;
    write_series(out, &format!("turning/{name}_series.csv"), model, o, &res)?;
    let t = &cfg.turning;
    let freqs = default_frequency_grid(model.m, model.k, t.frequency_points, t.frequency_upper_ratio);
    let lobes = stability_lobes_for_model(model, t.params.beta_force, &t.lobe_indices, &freqs)?;
    lobes.write_csv(BufWriter::new(File::create(out.join(format!("turning/{name}_lobes.csv")))?))?;
    rec.omega_rps = Some(res.best_omega);
    rec.b_mm = Some(res.best_b * 1e3);
    rec.mrr = Some(res.best_mrr);
    rec.iterations = Some(res.iterations);
    rec.metric_m = res.log.iter().find(|l| l.stable && l.omega == res.best_omega && l.b == res.best_b).map(|l| l.metric);
    if let Some(n) = cfg.turning.grid_resolution {
        let g = enumerate_cutting_grid(model, o, n)?;
        let mut wr = csv::Writer::from_path(out.join(format!("turning/{name}_grid.csv")))?;
        wr.write_record(["omega_rps", "b_mm", "metric", "stable", "mrr"])?;
        for p in &g.points {
            wr.write_record([p.omega.to_string(), (p.b * 1e3).to_string(), p.metric.to_string(), p.stable.to_string(), p.mrr.to_string()])?;
        }
        wr.flush()?;
    }
    Ok(())
}

/// Displacement (µm) and velocity (mm/s) over the sequence of accepted cuts.
fn write_series(out: &Path, rel: &str, model: &TurningModel, o: &TurningOptConfig, res: &CuttingResult) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_path(out.join(rel))?;
    wr.write_record(["t", "y_um", "ydot_mm_s"])?;
    let mut start = RolloutStart::REST;
    let mut t0 = 0.0;
    for l in res.log.iter().filter(|l| l.stable) {
        let roll = rollout_turning(model, l.omega, l.b, o.n_tau, o.n0 + o.nf, start, true);
        let dt = 1.0 / (l.omega * o.n_tau as f64);
        let (ys, vs) = roll.series.expect("series requested");
        // The last sample of one cut is the first of the next.
        let take = ys.len() - 1;
        for i in 0..take {
            wr.write_record([(t0 + i as f64 * dt).to_string(), (ys[i] * 1e6).to_string(), (vs[i] * 1e3).to_string()])?;
        }
        t0 += take as f64 * dt;
        start = RolloutStart::carried(roll.terminal.0, roll.terminal.1);
    }
    wr.flush()?;
    Ok(())
}

/// Renders the standard figures of a finished run into `out/plots`.
pub fn render_default_plots(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    use crate::plot::{render_plots, PlotKind};
    let dir = out.join("plots");
    fs::create_dir_all(&dir)?;
    let files = |sub: &str, suffix: &str| -> anyhow::Result<Vec<PathBuf>> {
        let d = out.join(sub);
        if !d.is_dir() {
            return Ok(Vec::new());
        }
        let mut v: Vec<PathBuf> = fs::read_dir(d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(suffix))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut written = Vec::new();
    match cfg.experiment {
        ExperimentKind::LorenzIdentify | ExperimentKind::TurningIdentify => {
            written.extend(render_plots(&out.join("report.csv"), PlotKind::Report, &dir, None)?);
        }
        ExperimentKind::LorenzSetpoint | ExperimentKind::LorenzTrack => {
            for f in files("closed_loop", ".csv")? {
                written.extend(render_plots(&f, PlotKind::Timeseries, &dir, None)?);
            }
        }
        ExperimentKind::TurningOptimize => {
            for log in files("turning", "_log.csv")? {
                let base = log.to_string_lossy().trim_end_matches("_log.csv").to_string();
                written.extend(render_plots(Path::new(&format!("{base}_lobes.csv")), PlotKind::Lobes, &dir, Some(&log))?);
                written.extend(render_plots(Path::new(&format!("{base}_series.csv")), PlotKind::Timeseries, &dir, None)?);
            }
        }
        ExperimentKind::Lobes => {
            for f in files("lobes", ".csv")? {
                written.extend(render_plots(&f, PlotKind::Lobes, &dir, None)?);
            }
        }
    }
    Ok(written)
}
