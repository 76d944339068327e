//! A single training run and its output directory.
//!
//! ```text
//! out/manifest.toml        [run] facts and the fully resolved [config]
//! out/metrics.jsonl        one record per epoch
//! out/model.ckpt           final parameters
//! out/histograms/epoch_0010.csv
//! ```
//!
//! The manifest is written before training starts and is itself a config:
//! `aapu train --config out/manifest.toml` repeats the run exactly.

use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use aapu_core::trainer::{train_with_observer, EpochRecord, Method};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset::fingerprint;
use crate::error::{Error, Result};
use crate::report::{histogram_file_name, write_histogram, MetricsWriter};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTOGRAM_DIR: &str = "histograms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub library_version: String,
    pub method: Method,
    pub seed: u64,
    pub dataset_fingerprint: String,
    /// Paths relative to the run directory.
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub metrics: String,
    pub checkpoint: String,
    pub histograms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run: RunInfo,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        toml::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn final_test_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.test_error)
    }
}

/// Trains `cfg` and writes every artifact into `out_dir`, creating it.
pub fn run_training(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    run_training_with_observer(cfg, out_dir, |_| ControlFlow::Continue(()))
}

/// As [`run_training`]; `observer` sees each record after it is written.
pub fn run_training_with_observer<F>(cfg: &ExperimentConfig, out_dir: &Path, mut observer: F) -> Result<RunSummary>
where
    F: FnMut(&EpochRecord) -> ControlFlow<()>,
{
    let data = cfg.dataset()?;
    let resolved = cfg.materialized(&data)?;
    let train_cfg = resolved.train_config(&data);
    train_cfg.validate()?;

    let manifest = RunManifest {
        run: RunInfo {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            method: resolved.method,
            seed: resolved.seed,
            dataset_fingerprint: fingerprint(&data),
            outputs: Outputs {
                metrics: METRICS_FILE.into(),
                checkpoint: CHECKPOINT_FILE.into(),
                histograms: resolved
                    .histogram_epochs
                    .iter()
                    .map(|&e| format!("{HISTOGRAM_DIR}/{}", histogram_file_name(e)))
                    .collect(),
            },
        },
        config: resolved,
    };
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| Error::data(&manifest_path, e.to_string()))?;
    fs::write(&manifest_path, text).map_err(Error::io(&manifest_path))?;

    let mut metrics = MetricsWriter::create(&out_dir.join(METRICS_FILE))?;
    let mut write_failure = None;
    let trained = train_with_observer(&train_cfg, &data, |r| {
        if let Err(e) = metrics.push(r) {
            write_failure = Some(e);
            return ControlFlow::Break(());
        }
        observer(r)
    });
    metrics.finish()?;
    if let Some(e) = write_failure {
        return Err(e);
    }
    let outcome = trained?;

    checkpoint::save(&out_dir.join(CHECKPOINT_FILE), &outcome.params)?;
    if !outcome.histograms.is_empty() {
        let dir = out_dir.join(HISTOGRAM_DIR);
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        for h in &outcome.histograms {
            write_histogram(&dir.join(histogram_file_name(h.epoch)), h)?;
        }
    }
    Ok(RunSummary { out_dir: out_dir.to_path_buf(), manifest, records: outcome.records, warnings: outcome.warnings })
}
