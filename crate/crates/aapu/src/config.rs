//! Experiment configuration files.
//!
//! A config is a TOML document whose keys mirror [`ExperimentConfig`]; nested
//! sections may be written as dotted keys (`risk.loss = "logistic"`). Every
//! key is optional and defaults to the two-dimensional sine recipe. Command
//! line flags override file values.
//!
//! A run manifest is also a valid config: its `[config]` table is used.

use std::fs;
use std::path::{Path, PathBuf};

use aapu_core::trainer::{Method, SelectionConfig, TrainConfig};
use aapu_core::{generate_sine_dataset, LossKind, MlpSpec, PUDataset, RiskConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::load_dataset_dir;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Drives training; also the data and initialization seeds unless those are set.
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// `[[start_epoch, learning_rate], ...]`
    pub lr_schedule: Vec<(usize, f64)>,
    pub histogram_epochs: Vec<usize>,
    /// Extra true positives for `nnpu_plus_p`.
    pub oracle_extra_p: usize,
    pub data: DataSection,
    pub risk: RiskSection,
    pub net: NetSection,
    pub selection: SelectionSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub n_p: usize,
    pub n_u: usize,
    pub n_test: usize,
    pub seed: Option<u64>,
    /// Dataset directory for `source = "csv"`.
    pub dir: Option<PathBuf>,
    pub header: bool,
    /// Overrides the prior stored in the dataset manifest.
    pub prior: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub loss: LossKind,
    /// Defaults to the dataset prior.
    pub prior: Option<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub literal_normalization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    pub batchnorm: bool,
    pub dropout: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub start_epoch: usize,
    pub per_epoch: usize,
    pub exclude_selected: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let recipe = TrainConfig::sine_recipe(0.5);
        ExperimentConfig {
            method: Method::Aapu,
            seed: 0,
            epochs: recipe.epochs,
            batch_size: recipe.batch_size,
            weight_decay: recipe.weight_decay,
            lr_schedule: recipe.lr_schedule,
            histogram_epochs: Vec::new(),
            oracle_extra_p: 200,
            data: DataSection::default(),
            risk: RiskSection::default(),
            net: NetSection::default(),
            selection: SelectionSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synthetic,
            n_p: 100,
            n_u: 1000,
            n_test: 10000,
            seed: None,
            dir: None,
            header: false,
            prior: None,
        }
    }
}

impl Default for RiskSection {
    fn default() -> Self {
        RiskSection { loss: LossKind::Logistic, prior: None, beta: 0.0, gamma: 1.0, literal_normalization: false }
    }
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection { hidden: vec![200, 600], batchnorm: true, dropout: 0.0, seed: None }
    }
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection { start_epoch: 200, per_epoch: 1, exclude_selected: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config_error = |message: String| Error::Config { path: path.to_path_buf(), message };
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        if table.contains_key("run") {
            if let Some(toml::Value::Table(inner)) = table.remove("config") {
                table = inner;
            }
        }
        table.try_into().map_err(|e: toml::de::Error| config_error(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.seed)
    }

    /// Generates or loads the dataset this config describes.
    pub fn dataset(&self) -> Result<PUDataset> {
        match self.data.source {
            DataSource::Synthetic => {
                Ok(generate_sine_dataset(self.data.n_p, self.data.n_u, self.data.n_test, self.data_seed())?)
            }
            DataSource::Csv => {
                let dir = self.data.dir.as_deref().ok_or_else(|| Error::Config {
                    path: PathBuf::from("data.dir"),
                    message: "csv data needs a dataset directory".into(),
                })?;
                load_dataset_dir(dir, self.data.prior, self.data.header)
            }
        }
    }

    /// The core training config for `data`. Validation is left to the trainer.
    pub fn train_config(&self, data: &PUDataset) -> TrainConfig {
        let mut dims = vec![data.dim()];
        dims.extend_from_slice(&self.net.hidden);
        dims.push(1);
        let prior = self.risk.prior.unwrap_or(data.prior());
        TrainConfig {
            method: self.method,
            risk: RiskConfig {
                estimator: self.method.estimator(),
                loss: self.risk.loss,
                prior,
                nnpu_beta: self.risk.beta,
                nnpu_gamma: self.risk.gamma,
                literal_normalization: self.risk.literal_normalization,
            },
            spec: MlpSpec::new(dims, self.net.seed.unwrap_or(self.seed))
                .with_batchnorm(self.net.batchnorm)
                .with_dropout(self.net.dropout),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_schedule: self.lr_schedule.clone(),
            weight_decay: self.weight_decay,
            selection: SelectionConfig {
                start_epoch: self.selection.start_epoch,
                per_epoch: self.selection.per_epoch,
                exclude_selected: self.selection.exclude_selected,
            },
            oracle_extra_p: self.oracle_extra_p,
            seed: self.seed,
            record_histogram_epochs: self.histogram_epochs.clone(),
        }
    }

    /// Copy with every seed, the prior and the data location made explicit.
    pub fn materialized(&self, data: &PUDataset) -> Result<Self> {
        let mut out = self.clone();
        out.data.seed = Some(self.data_seed());
        out.net.seed = Some(self.net.seed.unwrap_or(self.seed));
        out.risk.prior = Some(self.risk.prior.unwrap_or(data.prior()));
        if self.data.source == DataSource::Csv {
            out.data.prior = Some(data.prior());
            if let Some(dir) = &self.data.dir {
                out.data.dir = Some(fs::canonicalize(dir).map_err(Error::io(dir))?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_sine_recipe() {
        let cfg = ExperimentConfig::from_toml("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let data = generate_sine_dataset(5, 20, 50, 1).unwrap();
        let train = cfg.train_config(&data);
        let mut recipe = TrainConfig::sine_recipe(data.prior());
        recipe.oracle_extra_p = 200;
        assert_eq!(train, recipe);
    }

    #[test]
    fn dotted_keys_and_tables() {
        let text = r#"
            method = "nnpu"
            seed = 4
            lr_schedule = [[1, 1e-3], [5, 1e-4]]
            risk.loss = "sigmoid"
            net.hidden = [8]
            [selection]
            per_epoch = 3
        "#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.method, Method::Nnpu);
        assert_eq!(cfg.lr_schedule, vec![(1, 1e-3), (5, 1e-4)]);
        assert_eq!(cfg.risk.loss, LossKind::Sigmoid);
        assert_eq!(cfg.net.hidden, vec![8]);
        assert_eq!(cfg.selection.per_epoch, 3);
        assert_eq!(cfg.selection.start_epoch, 200);
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = ExperimentConfig::from_toml("risk.bogus = 1", Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ExperimentConfig::from_toml("method = \"svm\"", Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("svm"), "{err}");
    }

    #[test]
    fn materialized_config_round_trips() {
        let data = generate_sine_dataset(5, 20, 50, 7).unwrap();
        let cfg = ExperimentConfig { seed: 7, ..Default::default() }.materialized(&data).unwrap();
        assert_eq!((cfg.data.seed, cfg.net.seed, cfg.risk.prior), (Some(7), Some(7), Some(data.prior())));
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }
}
