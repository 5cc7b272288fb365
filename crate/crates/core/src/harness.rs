//! Runs named scenarios, singly or over many seeds, and renders the
//! verdict summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{mismatches, run_checks, Outcome, Verdict};
use crate::config::ConfigError;
use crate::scenario::{build, Params, Scenario};
use crate::trace::Trace;
use crate::world;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub baseline: bool,
    pub events: usize,
    pub verdicts: Vec<Verdict>,
    /// Checks whose result the scenario does not allow.
    pub unexpected: Vec<String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.unexpected.is_empty()
    }

    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }
}

pub fn scenario(name: &str, p: &Params) -> Result<Scenario, HarnessError> {
    build(name, p).ok_or_else(|| HarnessError::UnknownScenario(name.to_string()))
}

/// Runs a built scenario and checks its trace.
pub fn run_scenario(sc: &Scenario, checks: &[&str]) -> Result<(Trace, RunReport), HarnessError> {
    let trace = world::run(sc)?;
    let verdicts = run_checks(&trace, checks);
    let unexpected = mismatches(&verdicts, &sc.expect).into_iter().map(|v| v.check.clone()).collect();
    let report = RunReport {
        scenario: sc.name.clone(),
        seed: sc.cfg.seed,
        baseline: sc.baseline,
        events: trace.len(),
        verdicts,
        unexpected,
    };
    Ok((trace, report))
}

pub fn run_named(name: &str, p: &Params, checks: &[&str]) -> Result<(Trace, RunReport), HarnessError> {
    run_scenario(&scenario(name, p)?, checks)
}

pub fn trace_path(dir: &Path, r: &RunReport) -> PathBuf {
    let mode = if r.baseline { "-baseline" } else { "" };
    dir.join(format!("{}{}-seed{}.ndjson", r.scenario, mode, r.seed))
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    trace.write_ndjson(BufWriter::new(file)).map_err(io)
}

/// Runs one scenario per seed in parallel. Traces go to `out` when given.
/// Reports come back in seed order.
pub fn run_batch(
    name: &str,
    base: &Params,
    seeds: &[u64],
    checks: &[&str],
    out: Option<&Path>,
) -> Result<Vec<RunReport>, HarnessError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let p = Params { seed, ..base.clone() };
            let (trace, report) = run_named(name, &p, checks)?;
            if let Some(dir) = out {
                write_trace(&trace_path(dir, &report), &trace)?;
            }
            Ok(report)
        })
        .collect()
}

/// Plain-text summary. Evidence is given as trace line numbers.
pub fn summary(reports: &[RunReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let mode = if r.baseline { " baseline" } else { "" };
        let status = if r.ok() { "ok" } else { "UNEXPECTED" };
        let _ = writeln!(s, "{}{} seed {}: {} ({} events)", r.scenario, mode, r.seed, status, r.events);
        for v in &r.verdicts {
            let flag = if r.unexpected.contains(&v.check) { "  !" } else { "   " };
            let _ = write!(s, "{flag} {:<22} {:<5} {}", v.check, v.result.to_string(), v.note);
            if v.result == Outcome::Fail {
                let lines: Vec<String> = v.evidence.iter().take(8).map(|i| (i + 1).to_string()).collect();
                let more = if v.evidence.len() > 8 { ", ..." } else { "" };
                let _ = write!(s, " [lines {}{more}]", lines.join(", "));
            }
            s.push('\n');
        }
    }
    let ok = reports.iter().filter(|r| r.ok()).count();
    let _ = writeln!(s, "{} runs, {} as expected", reports.len(), ok);
    s
}
