//! Multi-seed experiments, parameter sweeps and result files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Origin, SimConfig};
use crate::harness::{run_lifetime_seeded, LifetimeResult, RoundReport};
use crate::protocol::EngineError;

pub const CSV_HEADER: &str = "param,seed,fnd,hnd,overhead_ratio,avg_hops";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed for {param} seed {seed}: {source}")]
    Engine { param: String, seed: u64, source: EngineError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad sweep `{0}`: expected param=v1,v2,... with param one of phi, cache_capacity, n, protocol")]
    BadSweep(String),
    #[error("line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Phi,
    CacheCapacity,
    N,
    Protocol,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Phi => "phi",
            SweepParam::CacheCapacity => "cache_capacity",
            SweepParam::N => "n",
            SweepParam::Protocol => "protocol",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<String>,
}

impl FromStr for SweepSpec {
    type Err = ExperimentError;

    /// `phi=0.1,0.2,0.3`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::BadSweep(s.to_string());
        let (key, values) = s.split_once('=').ok_or_else(bad)?;
        let parameter = match key.trim() {
            "phi" => SweepParam::Phi,
            "cache_capacity" | "cache" => SweepParam::CacheCapacity,
            "n" => SweepParam::N,
            "protocol" => SweepParam::Protocol,
            _ => return Err(bad()),
        };
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(bad());
        }
        let spec = SweepSpec { parameter, values };
        spec.validate(&SimConfig::default())?;
        Ok(spec)
    }
}

impl SweepSpec {
    /// Checks every value is in its parameter's domain.
    pub fn validate(&self, base: &SimConfig) -> Result<(), ExperimentError> {
        if self.values.is_empty() {
            return Err(ExperimentError::BadSweep(format!("{}=", self.parameter)));
        }
        for v in &self.values {
            base.clone().set(self.parameter.key(), v, Origin::Override)?;
        }
        Ok(())
    }
}

/// One lifetime run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub param: String,
    pub seed: u64,
    pub fnd: Option<u64>,
    pub hnd: Option<u64>,
    pub overhead_ratio: Option<f64>,
    pub avg_hops: Option<f64>,
    pub censored: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub series: Option<Vec<RoundReport>>,
}

impl RunRecord {
    fn from_result(param: &str, seed: u64, r: LifetimeResult, keep_series: bool) -> Self {
        Self {
            param: param.to_string(),
            seed,
            fnd: r.fnd,
            hnd: r.hnd,
            overhead_ratio: r.mean_overhead_ratio,
            avg_hops: r.mean_average_hops,
            censored: r.censored,
            series: keep_series.then_some(r.rounds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
}

/// Aggregate over the seeds of one parameter value. Censored lifetimes are
/// left out of the fnd/hnd statistics and counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param: String,
    pub statistic: Statistic,
    pub runs: usize,
    pub censored: usize,
    pub fnd: Option<f64>,
    pub hnd: Option<f64>,
    pub overhead_ratio: Option<f64>,
    pub avg_hops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    /// Swept parameter, or `protocol` for a plain experiment.
    pub parameter: String,
    pub config: SimConfig,
    pub rows: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentTable {
    pub fn rows_for<'a>(&'a self, param: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.rows.iter().filter(move |r| r.param == param)
    }

    pub fn summary_for(&self, param: &str, statistic: Statistic) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.param == param && s.statistic == statistic)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

fn summarize(param: &str, rows: &[&RunRecord]) -> [SummaryRow; 2] {
    let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
    let fnd = col(&|r| r.fnd.map(|v| v as f64));
    let hnd = col(&|r| r.hnd.map(|v| v as f64));
    let ovh = col(&|r| r.overhead_ratio);
    let hops = col(&|r| r.avg_hops);
    let censored = rows.iter().filter(|r| r.censored).count();
    let row = |statistic, f: fn(&[f64]) -> Option<f64>| SummaryRow {
        param: param.to_string(),
        statistic,
        runs: rows.len(),
        censored,
        fnd: f(&fnd),
        hnd: f(&hnd),
        overhead_ratio: f(&ovh),
        avg_hops: f(&hops),
    };
    [row(Statistic::Mean, mean), row(Statistic::Median, median)]
}

fn execute(
    parameter: &str,
    base: &SimConfig,
    cells: Vec<(String, SimConfig)>,
) -> Result<ExperimentTable, ExperimentError> {
    let jobs: Vec<(usize, &str, &SimConfig, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, (label, cfg))| (0..cfg.seeds as u64).map(move |k| (i, label.as_str(), cfg, cfg.seed + k)))
        .collect();
    let mut results: Vec<(usize, RunRecord)> = jobs
        .into_par_iter()
        .map(|(i, label, cfg, seed)| {
            let r = run_lifetime_seeded(cfg, seed)
                .map_err(|source| ExperimentError::Engine { param: label.to_string(), seed, source })?;
            Ok((i, RunRecord::from_result(label, seed, r, cfg.series)))
        })
        .collect::<Result<_, ExperimentError>>()?;
    results.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));
    let rows: Vec<RunRecord> = results.into_iter().map(|(_, r)| r).collect();
    let summary = cells
        .iter()
        .flat_map(|(label, _)| {
            let group: Vec<&RunRecord> = rows.iter().filter(|r| &r.param == label).collect();
            summarize(label, &group)
        })
        .collect();
    Ok(ExperimentTable { parameter: parameter.to_string(), config: base.clone(), rows, summary })
}

/// Runs `config.seeds` lifetimes with seeds `seed, seed+1, ...`.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentTable, ExperimentError> {
    execute("protocol", config, vec![(config.protocol.to_string(), config.clone())])
}

/// One experiment per sweep value, all sharing the same seed set.
pub fn sweep(config: &SimConfig, spec: &SweepSpec) -> Result<ExperimentTable, ExperimentError> {
    spec.validate(config)?;
    let cells = spec
        .values
        .iter()
        .map(|v| {
            let mut c = config.clone();
            c.set(spec.parameter.key(), v, Origin::Override)?;
            Ok((v.clone(), c))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    execute(spec.parameter.key(), config, cells)
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

/// CSV text for the per-run rows. Missing values (censored lifetimes,
/// undefined ratios) are empty fields.
pub fn to_csv(rows: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.param,
            r.seed,
            opt(&r.fnd),
            opt(&r.hnd),
            opt(&r.overhead_ratio),
            opt(&r.avg_hops)
        ));
    }
    out
}

/// Numeric payload of one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub param: String,
    pub seed: u64,
    pub fnd: Option<u64>,
    pub hnd: Option<u64>,
    pub overhead_ratio: Option<f64>,
    pub avg_hops: Option<f64>,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            param: r.param.clone(),
            seed: r.seed,
            fnd: r.fnd,
            hnd: r.hnd,
            overhead_ratio: r.overhead_ratio,
            avg_hops: r.avg_hops,
        }
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(ExperimentError::BadCsv { line: 1, reason: "missing header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| ExperimentError::BadCsv { line: i + 1, reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", f.len())));
        }
        fn field<T: FromStr>(s: &str) -> Result<Option<T>, String>
        where
            T::Err: fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e: T::Err| e.to_string())
            }
        }
        rows.push(CsvRow {
            param: f[0].to_string(),
            seed: f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            fnd: field(f[2]).map_err(bad)?,
            hnd: field(f[3]).map_err(bad)?,
            overhead_ratio: field(f[4]).map_err(bad)?,
            avg_hops: field(f[5]).map_err(bad)?,
        });
    }
    Ok(rows)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(contents.as_bytes()).map_err(io_err)
}

pub fn emit_csv(table: &ExperimentTable, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, &to_csv(&table.rows))
}

/// Summary statistics as CSV, one mean and one median row per value.
pub fn summary_csv(table: &ExperimentTable) -> String {
    let mut out = String::from("param,statistic,runs,censored,fnd,hnd,overhead_ratio,avg_hops\n");
    for s in &table.summary {
        let stat = match s.statistic {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.param,
            stat,
            s.runs,
            s.censored,
            opt(&s.fnd),
            opt(&s.hnd),
            opt(&s.overhead_ratio),
            opt(&s.avg_hops)
        ));
    }
    out
}

pub fn emit_summary_csv(table: &ExperimentTable, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, &summary_csv(table))
}

pub fn emit_json(table: &ExperimentTable, path: &Path) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(table).expect("results serialize");
    text.push('\n');
    write_file(path, &text)
}
