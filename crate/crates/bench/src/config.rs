//! Experiment configuration: a JSON document with one experiment kind, the noise ratios and
//! seeds to sweep, and per-system sections that default to the reference settings.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sparsectl::basis::build_dictionary;
use sparsectl::control::{MpcConfig, TurningOptConfig};
use sparsectl::plants::TurningParams;
use sparsectl::sysid::lorenz::{LorenzDataOptions, LORENZ_KAPPAS};
use sparsectl::sysid::turning::{NoiseChannels, TurningModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LorenzIdentify,
    LorenzSetpoint,
    LorenzTrack,
    TurningIdentify,
    TurningOptimize,
    Lobes,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::LorenzIdentify => "lorenz-identify",
            ExperimentKind::LorenzSetpoint => "lorenz-setpoint",
            ExperimentKind::LorenzTrack => "lorenz-track",
            ExperimentKind::TurningIdentify => "turning-identify",
            ExperimentKind::TurningOptimize => "turning-optimize",
            ExperimentKind::Lobes => "lobes",
        }
    }

    pub fn is_lorenz(self) -> bool {
        matches!(self, ExperimentKind::LorenzIdentify | ExperimentKind::LorenzSetpoint | ExperimentKind::LorenzTrack)
    }

    fn allowed_methods(self) -> &'static [Method] {
        match self {
            ExperimentKind::TurningOptimize | ExperimentKind::Lobes => &[Method::Pimlc, Method::Stlsq, Method::Truth, Method::Given],
            _ => &[Method::Pimlc, Method::Stlsq],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a model comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Cardinality-constrained selection plus least-squares refit.
    Pimlc,
    /// Thresholded least squares.
    Stlsq,
    /// The simulator's own parameters.
    Truth,
    /// The coefficients in `turning.model`.
    Given,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pimlc => "pimlc",
            Method::Stlsq => "stlsq",
            Method::Truth => "truth",
            Method::Given => "given",
        }
    }
}

/// A cut in presentation units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cut {
    pub omega_rps: f64,
    pub b_mm: f64,
}

impl Cut {
    pub fn b_m(&self) -> f64 {
        self.b_mm * 1e-3
    }

    pub fn label(&self) -> String {
        format!("{}rps_{}mm", self.omega_rps, self.b_mm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySpec {
    pub max_degree: u32,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self { max_degree: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurningSection {
    pub params: TurningParams,
    /// Training cuts for `turning-identify`.
    pub cuts: Vec<Cut>,
    /// Training cut for the models used by `turning-optimize` and `lobes`.
    pub training_cut: Cut,
    pub n_train: usize,
    pub noise_channels: NoiseChannels,
    pub optimizer: TurningOptConfig,
    pub start: Cut,
    /// Also classify a square grid of cuts and write the stability map.
    pub grid_resolution: Option<usize>,
    /// Coefficients for the `given` method.
    pub model: Option<TurningModel>,
    pub lobe_indices: Vec<usize>,
    pub frequency_points: usize,
    /// Upper end of the chatter-frequency grid as a multiple of the natural frequency.
    pub frequency_upper_ratio: f64,
}

impl Default for TurningSection {
    fn default() -> Self {
        let cuts = [400.0, 600.0, 800.0]
            .iter()
            .flat_map(|&w| [2.0, 8.0].map(|b| Cut { omega_rps: w, b_mm: b }))
            .collect();
        Self {
            params: TurningParams::default(),
            cuts,
            training_cut: Cut { omega_rps: 400.0, b_mm: 2.0 },
            n_train: 2000,
            noise_channels: NoiseChannels::TargetOnly,
            optimizer: TurningOptConfig::default(),
            start: Cut { omega_rps: 600.0, b_mm: 2.0 },
            grid_resolution: None,
            model: None,
            lobe_indices: (0..5).collect(),
            frequency_points: 4000,
            frequency_upper_ratio: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the experiment kind.
    #[serde(default)]
    pub name: Option<String>,
    pub experiment: ExperimentKind,
    pub noise_ratios: Vec<f64>,
    /// First seed; trial `i` uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    /// Support size per equation (Lorenz) or `[structural, force]` (turning).
    #[serde(default)]
    pub kappas: Option<Vec<usize>>,
    #[serde(default = "default_threshold")]
    pub stlsq_threshold: f64,
    #[serde(default = "default_stlsq_iters")]
    pub stlsq_max_iters: usize,
    #[serde(default)]
    pub lorenz: LorenzDataOptions,
    /// Defaults to the set-point or tracking preset.
    #[serde(default)]
    pub mpc: Option<MpcConfig>,
    #[serde(default = "default_mpc_duration")]
    pub mpc_duration: f64,
    /// Length of the terminal window for the steady-state error, time units.
    #[serde(default = "one_f")]
    pub steady_window: f64,
    /// Defaults to all states for set-point runs and `x1` for tracking.
    #[serde(default)]
    pub tracked_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub turning: TurningSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_methods() -> Vec<Method> {
    vec![Method::Pimlc]
}
fn default_threshold() -> f64 {
    0.1
}
fn default_stlsq_iters() -> usize {
    10
}
fn default_mpc_duration() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

/// A config that failed to parse or validate, with every offending key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config")?;
        for (i, issue) in self.issues.iter().enumerate() {
            write!(f, "{} {}: {}", if i == 0 { ":" } else { ";" }, issue.key, issue.message)?;
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn keys(&self) -> Vec<&str> {
        self.issues.iter().map(|i| i.key.as_str()).collect()
    }

    fn from_serde(e: &serde_json::Error) -> Self {
        let msg = e.to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("unknown field") || msg.contains("missing field") || msg.contains("unknown variant"))
            .unwrap_or("<document>")
            .to_string();
        ConfigError { issues: vec![Issue { key, message: msg }] }
    }
}

impl ExperimentConfig {
    /// Minimal config for `kind` with the reference settings.
    pub fn preset(kind: ExperimentKind) -> Self {
        let noise = match kind {
            ExperimentKind::LorenzSetpoint | ExperimentKind::LorenzTrack => 1.0,
            ExperimentKind::TurningOptimize => 0.1,
            _ => 0.0,
        };
        Self {
            name: None,
            experiment: kind,
            noise_ratios: vec![noise],
            seed: 0,
            trials: 1,
            methods: default_methods(),
            dictionary: DictionarySpec::default(),
            kappas: None,
            stlsq_threshold: default_threshold(),
            stlsq_max_iters: default_stlsq_iters(),
            lorenz: LorenzDataOptions::default(),
            mpc: None,
            mpc_duration: default_mpc_duration(),
            steady_window: 1.0,
            tracked_dims: None,
            turning: TurningSection::default(),
            output_dir: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ConfigError::from_serde(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.as_str().to_string())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|i| self.seed + i).collect()
    }

    pub fn lorenz_kappas(&self) -> Vec<usize> {
        self.kappas.clone().unwrap_or_else(|| LORENZ_KAPPAS.to_vec())
    }

    pub fn turning_kappas(&self) -> (usize, usize) {
        match self.kappas.as_deref() {
            Some([s, f]) => (*s, *f),
            _ => (3, 2),
        }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        self.mpc.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::LorenzTrack => MpcConfig::lorenz_tracking(),
            _ => MpcConfig::lorenz_setpoint(),
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.tracked_dims.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::LorenzTrack => vec![0],
            _ => vec![0, 1, 2],
        })
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| issues.push(Issue { key: key.into(), message });
        let kind = self.experiment;

        if self.noise_ratios.is_empty() {
            bad("noise_ratios", "at least one noise ratio is required".into());
        }
        if self.noise_ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            bad("noise_ratios", "noise ratios must be finite and non-negative".into());
        }
        if self.trials < 1 {
            bad("trials", "at least one trial is required".into());
        }
        if self.methods.is_empty() {
            bad("methods", "at least one method is required".into());
        }
        for m in &self.methods {
            if !kind.allowed_methods().contains(m) {
                bad("methods", format!("method {} is not available for {kind}", m.as_str()));
            }
        }
        if self.methods.contains(&Method::Given) && self.turning.model.is_none() {
            bad("turning.model", "the given method needs model coefficients".into());
        }
        if !(self.stlsq_threshold >= 0.0) {
            bad("stlsq_threshold", "threshold must be non-negative".into());
        }
        if self.stlsq_max_iters < 1 {
            bad("stlsq_max_iters", "at least one iteration is required".into());
        }

        if kind.is_lorenz() {
            if self.dictionary.max_degree < 2 {
                bad("dictionary.max_degree", "the Lorenz right-hand side needs degree 2".into());
            }
            let p = build_dictionary(3, 1, self.dictionary.max_degree.max(1), &[]).map(|d| d.len()).unwrap_or(0);
            match &self.kappas {
                Some(k) if k.len() != 3 => bad("kappas", format!("expected 3 entries, got {}", k.len())),
                Some(k) if k.iter().any(|&v| v == 0 || v > p) => bad("kappas", format!("each entry must be in 1..={p}")),
                _ => {}
            }
            if !(self.lorenz.dt > 0.0 && self.lorenz.duration > 0.0 && self.lorenz.validation_duration > 0.0) {
                bad("lorenz", "dt and durations must be positive".into());
            }
            if let Err(e) = self.lorenz.excitation.validate() {
                bad("lorenz.excitation", e.to_string());
            }
            if kind != ExperimentKind::LorenzIdentify {
                let mpc = self.mpc_config();
                if let Err(e) = mpc.validate(3, 1) {
                    bad("mpc", e.to_string());
                }
                if !(self.mpc_duration > 0.0) {
                    bad("mpc_duration", "duration must be positive".into());
                }
                if !(self.steady_window > 0.0 && self.steady_window <= self.mpc_duration) {
                    bad("steady_window", "window must be positive and no longer than the run".into());
                }
                let dims = self.dims();
                if dims.is_empty() || dims.iter().any(|&d| d > 2) {
                    bad("tracked_dims", "dimensions must be a nonempty subset of 0..=2".into());
                }
            }
        } else {
            if let Err(e) = self.turning.params.validate() {
                bad("turning.params", e.to_string());
            }
            match &self.kappas {
                Some(k) if k.len() != 2 => bad("kappas", format!("expected [structural, force], got {} entries", k.len())),
                Some(k) if k[0] == 0 || k[0] > 10 || k[1] == 0 || k[1] > 11 => {
                    bad("kappas", "structural κ must be in 1..=10 and force κ in 1..=11".into())
                }
                _ => {}
            }
            let cut_ok = |c: &Cut| c.omega_rps > 0.0 && c.b_mm > 0.0 && c.omega_rps.is_finite() && c.b_mm.is_finite();
            if kind == ExperimentKind::TurningIdentify && (self.turning.cuts.is_empty() || !self.turning.cuts.iter().all(cut_ok)) {
                bad("turning.cuts", "at least one cut with positive speed and width is required".into());
            }
            if !cut_ok(&self.turning.training_cut) {
                bad("turning.training_cut", "speed and width must be positive".into());
            }
            if self.turning.n_train < 10 {
                bad("turning.n_train", "at least 10 samples are required".into());
            }
            if kind == ExperimentKind::TurningOptimize {
                let o = &self.turning.optimizer;
                if let Err(e) = o.validate() {
                    bad("turning.optimizer", e.to_string());
                } else {
                    let s = &self.turning.start;
                    let inside = (o.omega_bounds.0..=o.omega_bounds.1).contains(&s.omega_rps)
                        && (o.b_bounds.0..=o.b_bounds.1).contains(&s.b_m());
                    if !inside {
                        bad("turning.start", "start lies outside the optimizer bounds".into());
                    }
                }
                if matches!(self.turning.grid_resolution, Some(r) if r < 2) {
                    bad("turning.grid_resolution", "grid needs at least 2 points per axis".into());
                }
            }
            if kind == ExperimentKind::Lobes {
                if self.turning.lobe_indices.is_empty() {
                    bad("turning.lobe_indices", "at least one lobe is required".into());
                }
                if self.turning.frequency_points < 2 || !(self.turning.frequency_upper_ratio > 1.0) {
                    bad("turning.frequency_points", "need ≥ 2 points and an upper ratio above 1".into());
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }
}

/// Several experiments run in sequence, each into its own subdirectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub experiments: Vec<ExperimentConfig>,
}

impl Suite {
    /// Parses either a suite or a single experiment.
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(s).map_err(|e| ConfigError::from_serde(&e))?;
        let suite = if value.get("experiments").is_some() {
            serde_json::from_value::<Suite>(value).map_err(|e| ConfigError::from_serde(&e))?
        } else {
            Suite { experiments: vec![serde_json::from_value(value).map_err(|e| ConfigError::from_serde(&e))?] }
        };
        let mut issues = Vec::new();
        for (i, e) in suite.experiments.iter().enumerate() {
            if let Err(err) = e.validate() {
                issues.extend(err.issues.into_iter().map(|is| Issue { key: format!("experiments[{i}].{}", is.key), ..is }));
            }
        }
        if suite.experiments.is_empty() {
            issues.push(Issue { key: "experiments".into(), message: "the suite is empty".into() });
        }
        if issues.is_empty() {
            Ok(suite)
        } else {
            Err(ConfigError { issues })
        }
    }

    /// The runs behind the reference tables and figures.
    pub fn paper_tables() -> Self {
        let named = |name: &str, kind| ExperimentConfig { name: Some(name.into()), ..ExperimentConfig::preset(kind) };
        let both = vec![Method::Pimlc, Method::Stlsq];
        Suite {
            experiments: vec![
                ExperimentConfig {
                    noise_ratios: vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0, 10.0, 50.0],
                    trials: 20,
                    methods: both.clone(),
                    ..named("lorenz-identification", ExperimentKind::LorenzIdentify)
                },
                ExperimentConfig { methods: both.clone(), ..named("lorenz-setpoint", ExperimentKind::LorenzSetpoint) },
                ExperimentConfig { methods: both.clone(), ..named("lorenz-tracking", ExperimentKind::LorenzTrack) },
                ExperimentConfig {
                    noise_ratios: vec![0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 5.0],
                    methods: both,
                    ..named("turning-identification", ExperimentKind::TurningIdentify)
                },
                ExperimentConfig {
                    noise_ratios: vec![0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0],
                    methods: vec![Method::Pimlc, Method::Truth],
                    ..named("turning-lobes", ExperimentKind::Lobes)
                },
                ExperimentConfig {
                    turning: TurningSection { grid_resolution: Some(20), ..Default::default() },
                    ..named("turning-optimization", ExperimentKind::TurningOptimize)
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for e in Suite::paper_tables().experiments {
            e.validate().unwrap_or_else(|err| panic!("{}: {err}", e.name()));
        }
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "lorenz-identify", "noise_ratios": [0.1]}"#).unwrap();
        assert_eq!(c.trials, 1);
        assert_eq!(c.methods, vec![Method::Pimlc]);
        assert_eq!(c.lorenz_kappas(), vec![3, 3, 2]);
        assert_eq!(c.lorenz.x0, [-8.0, 8.0, 27.0]);
        assert_eq!(c.name(), "lorenz-identify");
    }

    #[test]
    fn zero_kappa_is_rejected() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "lorenz-identify", "noise_ratios": [0], "kappas": [3, 0, 2]}"#)
            .unwrap_err();
        assert_eq!(e.keys(), vec!["kappas"]);
    }

    #[test]
    fn all_offending_keys_are_listed() {
        let e = ExperimentConfig::from_json(
            r#"{"experiment": "turning-optimize", "noise_ratios": [], "trials": 0, "methods": ["given"],
                "turning": {"start": {"omega_rps": 900, "b_mm": 2}}}"#,
        )
        .unwrap_err();
        assert_eq!(e.keys(), vec!["noise_ratios", "trials", "turning.model", "turning.start"]);
        assert!(e.to_string().starts_with("invalid config: noise_ratios:"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "lobes", "noise_ratios": [0], "nosie": 1}"#).unwrap_err();
        assert_eq!(e.keys(), vec!["nosie"]);
        let e = ExperimentConfig::from_json(r#"{"experiment": "lorenz", "noise_ratios": [0]}"#).unwrap_err();
        assert_eq!(e.keys(), vec!["lorenz"]);
    }

    #[test]
    fn method_must_fit_the_kind() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "lorenz-identify", "noise_ratios": [0], "methods": ["truth"]}"#)
            .unwrap_err();
        assert_eq!(e.keys(), vec!["methods"]);
    }

    #[test]
    fn roundtrip() {
        for e in Suite::paper_tables().experiments {
            assert_eq!(ExperimentConfig::from_json(&e.to_json()).unwrap(), e);
        }
    }

    #[test]
    fn suite_accepts_single_experiment() {
        let s = Suite::from_json(r#"{"experiment": "lobes", "noise_ratios": [0]}"#).unwrap();
        assert_eq!(s.experiments.len(), 1);
        let e = Suite::from_json(r#"{"experiments": [{"experiment": "lobes", "noise_ratios": [0], "trials": 0}]}"#).unwrap_err();
        assert_eq!(e.keys(), vec!["experiments[0].trials"]);
    }
}
