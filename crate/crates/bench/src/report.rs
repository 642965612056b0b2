//! Per-trial records and the versioned report CSV.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, Method};

pub const SCHEMA_VERSION: u32 = 1;

/// Written in place of a metric when the run blew up.
pub const DIVERGED: &str = "diverged";

pub const COLUMNS: [&str; 17] = [
    "schema_version",
    "experiment",
    "method",
    "case",
    "noise_ratio",
    "seed",
    "accuracy",
    "e_ss",
    "metric_m",
    "mrr",
    "omega_rps",
    "b_mm",
    "iterations",
    "status",
    "model_path",
    "error",
    "wall_time_s",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
    Infeasible,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::Infeasible => "infeasible",
            Status::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub experiment: String,
    pub method: Method,
    /// Training cut for turning runs; empty otherwise.
    pub case: String,
    pub noise_ratio: f64,
    pub seed: u64,
    pub accuracy: Option<usize>,
    pub e_ss: Option<f64>,
    pub metric_m: Option<f64>,
    pub mrr: Option<f64>,
    pub omega_rps: Option<f64>,
    pub b_mm: Option<f64>,
    pub iterations: Option<usize>,
    pub status: Status,
    /// Relative to the report directory.
    pub model_path: Option<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl Record {
    pub fn new(experiment: &str, method: Method, case: String, noise_ratio: f64, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            method,
            case,
            noise_ratio,
            seed,
            accuracy: None,
            e_ss: None,
            metric_m: None,
            mrr: None,
            omega_rps: None,
            b_mm: None,
            iterations: None,
            status: Status::Ok,
            model_path: None,
            error: None,
            wall_time_s: 0.0,
        }
    }

    pub fn failed(mut self, msg: impl Into<String>) -> Self {
        self.status = Status::Failed;
        self.error = Some(msg.into());
        self
    }

    fn sort_key(&self, other: &Self) -> Ordering {
        (self.method, &self.case, self.seed)
            .cmp(&(other.method, &other.case, other.seed))
            .then(self.noise_ratio.total_cmp(&other.noise_ratio))
    }

    fn numeric(&self, v: Option<f64>) -> String {
        match v {
            None => String::new(),
            Some(x) if !x.is_finite() || self.status == Status::Diverged => DIVERGED.into(),
            Some(x) => x.to_string(),
        }
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            SCHEMA_VERSION.to_string(),
            self.experiment.clone(),
            self.method.as_str().into(),
            self.case.clone(),
            self.noise_ratio.to_string(),
            self.seed.to_string(),
            opt(self.accuracy),
            self.numeric(self.e_ss),
            self.numeric(self.metric_m),
            self.numeric(self.mrr),
            self.numeric(self.omega_rps),
            self.numeric(self.b_mm),
            opt(self.iterations),
            self.status.as_str().into(),
            self.model_path.clone().unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
            format!("{:.3}", self.wall_time_s),
        ]
    }
}

/// Records sorted by (method, case, seed, noise ratio) plus the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, mut records: Vec<Record>) -> Self {
        records.sort_by(|a, b| a.sort_key(b));
        Self { config, records }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(COLUMNS)?;
        for r in &self.records {
            wr.write_record(r.cells())?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Model paths of every record that produced one.
    pub fn model_paths(&self) -> Vec<&str> {
        self.records.iter().filter_map(|r| r.model_path.as_deref()).collect()
    }
}

/// Reads a CSV into its header and rows.
pub fn read_table(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let rows = rd.records().map(|r| r.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}

/// Drops the named columns; used to compare reports without their timing.
pub fn without_columns(csv_text: &str, drop: &[&str]) -> anyhow::Result<String> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !drop.contains(&header[i].as_str())).collect();
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(keep.iter().map(|&i| &header[i]))?;
    for rec in rd.records() {
        let rec = rec?;
        wr.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    Ok(String::from_utf8(wr.into_inner()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    fn report(records: Vec<Record>) -> String {
        let r = ExperimentReport::new(ExperimentConfig::preset(ExperimentKind::LorenzSetpoint), records);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_and_sentinel() {
        let mut a = Record::new("lorenz-setpoint", Method::Pimlc, String::new(), 1.0, 0);
        a.e_ss = Some(1e-4);
        let mut b = Record::new("lorenz-setpoint", Method::Stlsq, String::new(), 1.0, 0);
        b.e_ss = Some(f64::NAN);
        b.status = Status::Diverged;
        let s = report(vec![b, a]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], COLUMNS.join(","));
        assert!(lines[1].starts_with("1,lorenz-setpoint,pimlc,,1,0,,0.0001,"), "{}", lines[1]);
        assert!(lines[2].contains(",diverged,"), "{}", lines[2]);
    }

    #[test]
    fn sorted_by_method_case_seed_noise() {
        let recs = vec![
            Record::new("x", Method::Stlsq, "a".into(), 0.1, 0),
            Record::new("x", Method::Pimlc, "a".into(), 1.0, 1),
            Record::new("x", Method::Pimlc, "a".into(), 0.1, 1),
            Record::new("x", Method::Pimlc, "a".into(), 0.1, 0),
        ];
        let r = ExperimentReport::new(ExperimentConfig::preset(ExperimentKind::LorenzIdentify), recs);
        let keys: Vec<(Method, u64, f64)> = r.records.iter().map(|r| (r.method, r.seed, r.noise_ratio)).collect();
        assert_eq!(keys, vec![(Method::Pimlc, 0, 0.1), (Method::Pimlc, 1, 0.1), (Method::Pimlc, 1, 1.0), (Method::Stlsq, 0, 0.1)]);
    }

    #[test]
    fn dropping_wall_time() {
        let mut a = Record::new("x", Method::Pimlc, String::new(), 0.0, 0);
        a.wall_time_s = 1.5;
        let mut b = a.clone();
        b.wall_time_s = 2.5;
        let (sa, sb) = (report(vec![a]), report(vec![b]));
        assert_ne!(sa, sb);
        assert_eq!(without_columns(&sa, &["wall_time_s"]).unwrap(), without_columns(&sb, &["wall_time_s"]).unwrap());
    }
}
