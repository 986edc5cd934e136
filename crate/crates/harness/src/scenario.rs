//! Sweep execution and CSV output.

use std::fmt::Write as _;
use std::path::Path;

use multirat_core::control::acpf::SelectionPolicy;
use multirat_core::control::trace::{self, TraceRecord};
use multirat_core::control::ControllerStats;
use multirat_core::simulation::{self, SimulationError, WorldStats};
use multirat_core::types::QosClass;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, RunPoint, Scenario, ScenarioConfig};

pub const CSV_HEADER: &str =
    "scenario,policy,lambda_d,lambda_v,seed,slice,throughput_mbps,mean_latency_s,blocking_prob,arrivals,admitted,blocked";

/// Written where a value does not apply, e.g. blocking with no arrivals.
pub const NA: &str = "NA";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {point}: {source}")]
    Run {
        point: String,
        #[source]
        source: SimulationError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scenario: u8,
    pub policy: SelectionPolicy,
    pub lambda_d: f64,
    pub lambda_v: f64,
    pub seed: u64,
    pub slice: String,
    pub throughput_mbps: f64,
    pub mean_latency_s: Option<f64>,
    pub blocking_prob: Option<f64>,
    pub arrivals: u64,
    pub admitted: u64,
    pub blocked: u64,
}

impl CsvRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| NA.to_owned(), |x| format!("{x:.9}"));
        format!(
            "{},{},{},{},{},{},{:.6},{},{},{},{},{}",
            self.scenario,
            self.policy,
            self.lambda_d,
            self.lambda_v,
            self.seed,
            self.slice,
            self.throughput_mbps,
            opt(self.mean_latency_s),
            opt(self.blocking_prob),
            self.arrivals,
            self.admitted,
            self.blocked
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub point: RunPoint,
    pub rows: Vec<CsvRow>,
    pub world: WorldStats,
    pub controller: ControllerStats,
    /// Best-effort blocking, over the whole window.
    pub data_blocking: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub runs: Vec<RunSummary>,
    /// Control trace of the first run in sweep order.
    pub trace: Vec<TraceRecord>,
}

impl ScenarioResult {
    pub fn rows(&self) -> impl Iterator<Item = &CsvRow> {
        self.runs.iter().flat_map(|r| r.rows.iter())
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.rows() {
            let _ = writeln!(out, "{}", row.to_csv_line());
        }
        out
    }

    pub fn trace_tsv(&self) -> String {
        trace::to_tsv(&self.trace)
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ScenarioError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let csv = dir.join("results.csv");
        std::fs::write(&csv, self.csv()).map_err(io(&csv))?;
        let log = dir.join("trace.log");
        std::fs::write(&log, self.trace_tsv()).map_err(io(&log))?;
        Ok(())
    }
}

fn describe(p: &RunPoint) -> String {
    format!(
        "lambda_d={} lambda_v={} seed={} policy={}",
        p.lambda_d, p.lambda_v, p.seed, p.policy
    )
}

/// Run every point of the sweep, in parallel; results come back in sweep
/// order whatever the completion order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    cfg.validate()?;
    let points = cfg.points();
    let outputs: Vec<_> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut sim = cfg.sim_config(p);
            sim.record_trace = i == 0;
            simulation::run(sim).map_err(|source| ScenarioError::Run {
                point: describe(p),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let scenario = cfg.scenario.number();
    let mut trace = Vec::new();
    let mut runs = Vec::with_capacity(points.len());
    for (i, (point, out)) in points.into_iter().zip(outputs).enumerate() {
        if i == 0 {
            trace = out.trace;
        }
        let rows = out
            .report
            .slices
            .iter()
            .map(|s| CsvRow {
                scenario,
                policy: point.policy,
                lambda_d: point.lambda_d,
                lambda_v: point.lambda_v,
                seed: point.seed,
                slice: s.name.clone(),
                throughput_mbps: s.throughput_mbps,
                mean_latency_s: s.mean_latency_s,
                blocking_prob: s.blocking_prob,
                arrivals: s.counts.arrivals,
                admitted: s.counts.admitted,
                blocked: s.counts.blocked,
            })
            .collect();
        runs.push(RunSummary {
            point,
            rows,
            world: out.stats,
            controller: out.controller,
            data_blocking: out.report.blocking(QosClass::BestEffort),
        });
    }
    Ok(ScenarioResult {
        scenario: cfg.scenario,
        runs,
        trace,
    })
}
