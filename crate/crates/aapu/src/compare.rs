//! Method comparisons over seeds.
//!
//! Each (method, seed) cell is an ordinary run in its own directory,
//! `<out>/<position>-<method>/seed-<seed>`. Results are aggregated into
//! `curves.csv` (per-epoch mean and population variance of test error) and
//! `summary.csv` (final-window statistics).

use std::fs;
use std::path::{Path, PathBuf};

use aapu_core::trainer::{EpochRecord, Method};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::run::run_training;

pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Subdirectory of the output root used when no directory is given.
pub const COMPARE_DEFAULT_DIR: &str = "compare";
/// Epochs averaged for the final error.
pub const FINAL_WINDOW: usize = 100;

#[derive(Debug, Clone)]
pub struct CompareRequest {
    /// Shared settings; method and seed are replaced per cell.
    pub base: ExperimentConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub position: usize,
    pub method: Method,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: std::result::Result<Vec<EpochRecord>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub runs: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub position: usize,
    pub method: Method,
    pub ok: usize,
    pub failed: usize,
    /// Mean and variance over seeds of the mean test error in the final window.
    pub final_mean: Option<f64>,
    pub final_variance: Option<f64>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cells: Vec<Cell>,
    pub summaries: Vec<MethodSummary>,
}

impl CompareReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// The summary as an aligned text table.
    pub fn table(&self) -> String {
        let mut out =
            format!("{:<14} {:>4} {:>6} {:>12} {:>12}\n", "method", "ok", "failed", "final_mean", "final_var");
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        for s in &self.summaries {
            out.push_str(&format!(
                "{:<14} {:>4} {:>6} {:>12} {:>12}\n",
                s.method.name(),
                s.ok,
                s.failed,
                fmt(s.final_mean),
                fmt(s.final_variance)
            ));
        }
        out
    }
}

/// Mean and population variance.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

fn final_error(records: &[EpochRecord]) -> Option<f64> {
    let tail = &records[records.len().saturating_sub(FINAL_WINDOW)..];
    (!tail.is_empty()).then(|| moments(&tail.iter().map(|r| r.test_error).collect::<Vec<_>>()).0)
}

fn summarize(position: usize, method: Method, cells: &[&Cell]) -> MethodSummary {
    let runs: Vec<&Vec<EpochRecord>> = cells.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
    let finals: Vec<f64> = runs.iter().filter_map(|r| final_error(r)).collect();
    let (final_mean, final_variance) = match finals.is_empty() {
        true => (None, None),
        false => {
            let (m, v) = moments(&finals);
            (Some(m), Some(v))
        }
    };
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    let curve = (0..longest)
        .map(|i| {
            let errors: Vec<f64> = runs.iter().filter_map(|r| r.get(i)).map(|r| r.test_error).collect();
            let (mean, variance) = moments(&errors);
            CurvePoint { epoch: i + 1, runs: errors.len(), mean, variance }
        })
        .collect();
    MethodSummary {
        position,
        method,
        ok: runs.len(),
        failed: cells.len() - runs.len(),
        final_mean,
        final_variance,
        curve,
    }
}

/// Runs every cell, then writes the aggregate tables into `out_dir`.
pub fn run_compare(req: &CompareRequest, out_dir: &Path) -> Result<CompareReport> {
    if req.methods.len() < 2 {
        return Err(Error::Usage(format!("compare needs at least two methods, got {}", req.methods.len())));
    }
    if req.seeds.is_empty() {
        return Err(Error::Usage("compare needs at least one seed".into()));
    }
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;

    let jobs: Vec<(usize, Method, u64)> =
        req.methods.iter().enumerate().flat_map(|(pos, &m)| req.seeds.iter().map(move |&s| (pos, m, s))).collect();
    let run_cell = |&(position, method, seed): &(usize, Method, u64)| {
        let mut cfg = req.base.clone();
        cfg.method = method;
        cfg.seed = seed;
        let dir = out_dir.join(format!("{}-{}", position + 1, method.name())).join(format!("seed-{seed}"));
        let outcome = run_training(&cfg, &dir).map(|s| s.records).map_err(|e| e.to_string());
        if let Err(message) = &outcome {
            // Best effort: the cell directory may not exist if the failure came first.
            let _ = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("error.txt"), format!("{message}\n")));
        }
        Cell { position, method, seed, dir, outcome }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start workers: {e}")))?;
    let cells: Vec<Cell> = pool.install(|| jobs.par_iter().map(run_cell).collect());

    let summaries: Vec<MethodSummary> = req
        .methods
        .iter()
        .enumerate()
        .map(|(pos, &m)| summarize(pos, m, &cells.iter().filter(|c| c.position == pos).collect::<Vec<_>>()))
        .collect();
    write_curves(&out_dir.join(CURVES_FILE), &summaries)?;
    write_summary(&out_dir.join(SUMMARY_FILE), &summaries)?;
    Ok(CompareReport { cells, summaries })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))
}

/// Long format: `method,epoch,runs,mean_test_error,var_test_error`.
fn write_curves(path: &Path, summaries: &[MethodSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let wrap = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record(["method", "epoch", "runs", "mean_test_error", "var_test_error"]).map_err(wrap)?;
    for s in summaries {
        for p in &s.curve {
            w.write_record([
                s.method.name().to_string(),
                p.epoch.to_string(),
                p.runs.to_string(),
                p.mean.to_string(),
                p.variance.to_string(),
            ])
            .map_err(|e| Error::data(path, e.to_string()))?;
        }
    }
    w.flush().map_err(Error::io(path))
}

fn write_summary(path: &Path, summaries: &[MethodSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let wrap = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record([
        "method",
        "runs_ok",
        "runs_failed",
        "final_window",
        "final_mean_test_error",
        "final_var_test_error",
    ])
    .map_err(wrap)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for s in summaries {
        w.write_record([
            s.method.name().to_string(),
            s.ok.to_string(),
            s.failed.to_string(),
            FINAL_WINDOW.to_string(),
            opt(s.final_mean),
            opt(s.final_variance),
        ])
        .map_err(|e| Error::data(path, e.to_string()))?;
    }
    w.flush().map_err(Error::io(path))
}
