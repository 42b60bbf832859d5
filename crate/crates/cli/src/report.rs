//! Convergence table over finished sweeps, recounted from the mission logs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use lsvl_core::sim::CSV_HEADER;
use serde::{Deserialize, Serialize};

use crate::config::Likelihood;
use crate::error::CliError;
use crate::output::{self, VERSION};
use crate::{SweepSummary, SWEEP_SUMMARY};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Sweep output directories.
    #[arg(required = true)]
    pub sweeps: Vec<PathBuf>,
    /// Report JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Convergence facts read back from one mission CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCount {
    pub updates: usize,
    pub k_c: Option<usize>,
    pub mean_err_post: Option<f64>,
}

/// Parses a mission log and finds the first converged update.
pub fn recount_log(path: &Path) -> Result<LogCount, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::io(path, "not a mission log (unexpected header)"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() == 11)
            .then(|| Some((f[0].parse::<usize>().ok()?, f[7].parse::<f64>().ok()?, f[10] == "1")))
            .flatten();
        rows.push(parsed.ok_or_else(|| CliError::io(path, format!("malformed row {}", n + 2)))?);
    }
    let k_c = rows.iter().find(|r| r.2).map(|r| r.0);
    let mean_err_post = k_c.map(|kc| {
        let post: Vec<f64> = rows.iter().filter(|r| r.0 >= kc).map(|r| r.1).collect();
        post.iter().sum::<f64>() / post.len() as f64
    });
    Ok(LogCount {
        updates: rows.len(),
        k_c,
        mean_err_post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep: String,
    pub likelihood: Likelihood,
    pub runs: usize,
    pub converged: usize,
    pub p_c: f64,
    /// Mean k_c over converged runs.
    pub mean_k_c: Option<f64>,
    /// Mean k_c with unconverged runs counted as `max_updates + 1`.
    pub mean_k_c_censored: f64,
    /// Mean post-convergence error over converged runs, meters.
    pub mean_err_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:<10} {:>5} {:>6} {:>8} {:>8} {:>10}", "sweep", "likelihood", "runs", "p_c", "k_c", "k_c*", "err_c [m]");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:<10} {:>5} {:>6.2} {:>8} {:>8.1} {:>10}",
                r.sweep,
                format!("{:?}", r.likelihood).to_lowercase(),
                r.runs,
                r.p_c,
                opt(r.mean_k_c, 1),
                r.mean_k_c_censored,
                opt(r.mean_err_c, 1),
            );
        }
        s
    }
}

fn row_for(dir: &Path) -> Result<ReportRow, CliError> {
    let summary: SweepSummary = output::read_json(&dir.join(SWEEP_SUMMARY))?;
    let counts = summary
        .runs
        .iter()
        .map(|r| recount_log(&dir.join(&r.log)))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = counts.len();
    let k: Vec<f64> = counts.iter().filter_map(|c| c.k_c).map(|k| k as f64).collect();
    let e: Vec<f64> = counts.iter().filter_map(|c| c.mean_err_post).collect();
    let censor = (summary.max_updates + 1) as f64;
    let censored: f64 = counts.iter().map(|c| c.k_c.map_or(censor, |k| k as f64)).sum();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(ReportRow {
        sweep: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        likelihood: summary.likelihood,
        runs,
        converged: k.len(),
        p_c: k.len() as f64 / runs.max(1) as f64,
        mean_k_c: mean(&k),
        mean_k_c_censored: censored / runs.max(1) as f64,
        mean_err_c: mean(&e),
    })
}

pub fn cmd_report(args: &ReportArgs) -> Result<Report, CliError> {
    let rows = args.sweeps.iter().map(|d| row_for(d)).collect::<Result<Vec<_>, _>>()?;
    let report = Report {
        tool: "lsvl".into(),
        version: VERSION.into(),
        rows,
    };
    if let Some(out) = &args.out {
        output::write_json_atomic(out, &report)?;
    }
    Ok(report)
}
