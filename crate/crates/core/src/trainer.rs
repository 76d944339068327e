//! The training loop: stratified minibatch steps on the configured risk,
//! per-epoch large-loss selection for aaPU, and per-epoch evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::seq::SliceRandom;

use crate::data::{make_minibatches, Label, PUDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::LossKind;
use crate::net::{AdamState, Mlp, MlpSpec, Mode};
use crate::risk::{self, Estimator, RiskConfig};
use crate::rng;
use crate::selection::{duplicates_of_positives, loss_histogram, unlabeled_losses, LossHistogram, SelectionState};

const DROPOUT_STREAM: u64 = 4;
const ORACLE_STREAM: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Supervised oracle: the unlabeled points with negative ground truth act as N.
    Pn,
    Upu,
    Nnpu,
    /// nnPU with extra true positives from U copied into the labeled set.
    NnpuPlusP,
    Aapu,
}

impl Method {
    pub fn estimator(self) -> Estimator {
        match self {
            Method::Pn => Estimator::Pn,
            Method::Upu => Estimator::Upu,
            Method::Nnpu | Method::NnpuPlusP => Estimator::Nnpu,
            Method::Aapu => Estimator::Aapu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pn => "pn",
            Method::Upu => "upu",
            Method::Nnpu => "nnpu",
            Method::NnpuPlusP => "nnpu_plus_p",
            Method::Aapu => "aapu",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "pn" => Method::Pn,
            "upu" => Method::Upu,
            "nnpu" => Method::Nnpu,
            "nnpu_plus_p" => Method::NnpuPlusP,
            "aapu" => Method::Aapu,
            _ => return Err(Error::Config(format!("unknown method `{name}`"))),
        })
    }
}

/// Selection schedule: `per_epoch` points after every epoch from `start_epoch` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionConfig {
    pub start_epoch: usize,
    pub per_epoch: usize,
    /// Keep members of S out of later rounds so each round adds `per_epoch`
    /// new points. With `false` only copies of labeled positives are excluded.
    pub exclude_selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub method: Method,
    /// `risk.estimator` must match `method`.
    pub risk: RiskConfig,
    /// `spec.seed` drives weight initialization.
    pub spec: MlpSpec,
    pub epochs: usize,
    pub batch_size: usize,
    /// `(start_epoch, learning_rate)`, first entry at epoch 1.
    pub lr_schedule: Vec<(usize, f64)>,
    pub weight_decay: f64,
    pub selection: SelectionConfig,
    pub oracle_extra_p: usize,
    /// Drives minibatch shuffles, dropout masks and oracle draws.
    pub seed: u64,
    pub record_histogram_epochs: Vec<usize>,
}

impl TrainConfig {
    /// Two-dimensional sine benchmark setup: a 200-600 ReLU network with
    /// batch norm, logistic loss, Adam at 1e-4 then 1e-5 from epoch 101,
    /// weight decay 0.05, batch 128, 1000 epochs, one selection per epoch
    /// from epoch 200.
    pub fn sine_recipe(prior: f64) -> Self {
        TrainConfig {
            method: Method::Aapu,
            risk: RiskConfig::new(Estimator::Aapu, LossKind::Logistic, prior),
            spec: MlpSpec::new(alloc::vec![2, 200, 600, 1], 0).with_batchnorm(true),
            epochs: 1000,
            batch_size: 128,
            lr_schedule: alloc::vec![(1, 1e-4), (101, 1e-5)],
            weight_decay: 0.05,
            selection: SelectionConfig { start_epoch: 200, per_epoch: 1, exclude_selected: true },
            oracle_extra_p: 0,
            seed: 0,
            record_histogram_epochs: Vec::new(),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self.risk.estimator = method.estimator();
        self
    }

    /// Sets both the training seed and the initialization seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.spec.seed = seed;
        self
    }

    /// Learning rate of the schedule entry with the largest start `<= epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_schedule.iter().take_while(|(start, _)| *start <= epoch).last().map_or(self.lr_schedule[0].1, |e| e.1)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.risk.validate()?;
        if self.risk.estimator != self.method.estimator() {
            return Err(Error::Config(format!(
                "risk.estimator {:?} does not match method {}",
                self.risk.estimator,
                self.method.name()
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        match self.lr_schedule.first() {
            Some((1, _)) => {}
            _ => return Err(Error::Config("lr_schedule must start at epoch 1".into())),
        }
        if self.lr_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("lr_schedule epochs must be strictly increasing".into()));
        }
        if let Some((epoch, lr)) = self.lr_schedule.iter().find(|(_, lr)| !(*lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(format!("learning rate {lr} at epoch {epoch} must be positive")));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.method == Method::Aapu && self.selection.start_epoch == 0 {
            return Err(Error::Config("selection.start_epoch must be at least 1".into()));
        }
        if self.method == Method::NnpuPlusP && self.oracle_extra_p == 0 {
            return Err(Error::Config("nnpu_plus_p needs oracle_extra_p >= 1".into()));
        }
        if let Some(e) = self.record_histogram_epochs.iter().find(|&&e| e == 0 || e > self.epochs) {
            return Err(Error::Config(format!("histogram epoch {e} outside 1..={}", self.epochs)));
        }
        Ok(())
    }

    /// Non-fatal oddities of an otherwise valid config.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.method == Method::Aapu && self.selection.per_epoch == 0 {
            out.push(String::from("aapu with selection.per_epoch = 0 never selects and reduces to nnpu"));
        }
        out
    }
}

/// Metrics for one epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective_mean: f64,
    pub negative_part_mean: f64,
    pub clamp_fraction: f64,
    pub test_error: f64,
    pub selected_total: usize,
    pub selection_purity: Option<f64>,
    pub selection_recall: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Mlp,
    pub records: Vec<EpochRecord>,
    pub histograms: Vec<LossHistogram>,
    /// The selected set, for aaPU.
    pub selection: Option<SelectionState>,
    pub warnings: Vec<String>,
    /// The observer stopped the run before the last epoch.
    pub stopped_early: bool,
}

/// Selected-set quality against hidden labels. `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionDiagnostics {
    pub purity: Option<f64>,
    pub recall: Option<f64>,
}

pub fn selection_diagnostics(state: &SelectionState, truth: &[Label]) -> Result<SelectionDiagnostics> {
    if truth.len() != state.n_u() {
        return Err(Error::Shape(format!("{} labels for {} unlabeled points", truth.len(), state.n_u())));
    }
    let hits = state.indices().iter().filter(|&&i| truth[i].is_positive()).count();
    let positives = truth.iter().filter(|l| l.is_positive()).count();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(SelectionDiagnostics { purity: ratio(hits, state.len()), recall: ratio(hits, positives) })
}

/// Test zero-one error in eval mode, and the margins `y * g(x)`.
pub fn evaluate(params: &Mlp, data: &PUDataset) -> Result<(f64, Vec<f64>)> {
    let scores = params.predict(data.test_features()).map_err(|e| match e {
        Error::Shape(msg) => Error::Contract(msg),
        other => other,
    })?;
    let margins: Vec<f64> = scores.iter().zip(data.test_labels()).map(|(s, y)| y.sign() * s).collect();
    let errors = margins.iter().filter(|m| LossKind::ZeroOne.value(**m) > 0.0).count();
    Ok((errors as f64 / margins.len() as f64, margins))
}

pub fn train(cfg: &TrainConfig, data: &PUDataset) -> Result<TrainOutcome> {
    train_with_observer(cfg, data, |_| ControlFlow::Continue(()))
}

/// As [`train`], calling `observer` after each epoch; `Break` ends the run.
pub fn train_with_observer<F>(cfg: &TrainConfig, data: &PUDataset, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord) -> ControlFlow<()>,
{
    cfg.validate()?;
    if cfg.spec.input_dim() != data.dim() {
        return Err(Error::Config(format!(
            "network input dimension {} does not match data dimension {}",
            cfg.spec.input_dim(),
            data.dim()
        )));
    }
    let groups = Groups::new(cfg, data)?;
    let mut net = Mlp::init(&cfg.spec)?;
    let mut adam = AdamState::new(&net);
    let mut selection = (cfg.method == Method::Aapu).then(|| {
        SelectionState::new(data.n_u(), cfg.selection.start_epoch, cfg.selection.per_epoch)
            .with_blocked(duplicates_of_positives(data.positives(), data.unlabeled()))
            .with_exclude_selected(cfg.selection.exclude_selected)
    });

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut histograms = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let selected: &[usize] = selection.as_ref().map_or(&[], |s| s.indices());
        let plan = make_minibatches(
            groups.labeled.rows(),
            groups.second.rows(),
            selected.len(),
            cfg.batch_size,
            rng::derive(cfg.seed, epoch as u64),
        )?;
        let mut dropout_rng = rng::stream(cfg.seed, DROPOUT_STREAM, epoch as u64);
        let (mut objective, mut negative_part, mut clamps) = (0.0, 0.0, 0usize);
        for batch in &plan.batches {
            let s_rows: Vec<usize> = batch.s.iter().map(|&k| selected[k]).collect();
            let mut rows = Vec::with_capacity((batch.p.len() + s_rows.len() + batch.u.len()) * data.dim());
            for &i in &batch.p {
                rows.extend_from_slice(groups.labeled.row(i));
            }
            for &i in &s_rows {
                rows.extend_from_slice(data.unlabeled().row(i));
            }
            for &i in &batch.u {
                rows.extend_from_slice(groups.second.row(i));
            }
            let n = batch.p.len() + s_rows.len() + batch.u.len();
            let inputs = Matrix::from_vec(n, data.dim(), rows)?;
            let (scores, cache) = net.forward(&inputs, Mode::Train, &mut dropout_rng)?;
            if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
                return Err(Error::Numeric { epoch, detail: format!("training score {i} is not finite") });
            }
            let (sp, rest) = scores.split_at(batch.p.len());
            let (ss, su) = rest.split_at(s_rows.len());
            let out = risk::evaluate(sp, ss, su, &cfg.risk)?;
            if !out.value.is_finite() {
                return Err(Error::Numeric { epoch, detail: format!("objective is {}", out.value) });
            }
            objective += out.value;
            negative_part += out.negative_part;
            clamps += usize::from(out.clamped);

            let mut dscore = out.dscore_p;
            dscore.extend_from_slice(&out.dscore_s);
            dscore.extend_from_slice(&out.dscore_u);
            let grads = net.backward(&cache, &dscore)?;
            net.adam_step(&grads, &mut adam, lr, cfg.weight_decay)?;
        }

        if net.state_tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric { epoch, detail: "network parameters are not finite".into() });
        }

        let wants_histogram = cfg.record_histogram_epochs.contains(&epoch);
        let selecting = selection.as_ref().is_some_and(|s| s.is_active(epoch));
        if wants_histogram || selecting {
            let lu = unlabeled_losses(&net, data.unlabeled(), cfg.risk.loss, epoch)?;
            if let (true, Some(state)) = (selecting, selection.as_mut()) {
                state.select_and_update(&lu)?;
            }
            if wants_histogram {
                histograms.push(loss_histogram(&lu, data.unlabeled_truth())?);
            }
        }

        let (test_error, margins) = evaluate(&net, data)?;
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric { epoch, detail: "test score is not finite".into() });
        }
        let diagnostics = match (&selection, data.unlabeled_truth()) {
            (Some(state), Some(truth)) => Some(selection_diagnostics(state, truth)?),
            _ => None,
        };
        let batches = plan.batches.len() as f64;
        let record = EpochRecord {
            epoch,
            objective_mean: objective / batches,
            negative_part_mean: negative_part / batches,
            clamp_fraction: clamps as f64 / batches,
            test_error,
            selected_total: selection.as_ref().map_or(0, |s| s.len()),
            selection_purity: diagnostics.and_then(|d| d.purity),
            selection_recall: diagnostics.and_then(|d| d.recall),
        };
        let flow = observer(&record);
        records.push(record);
        if flow.is_break() {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(TrainOutcome { params: net, records, histograms, selection, warnings: cfg.warnings(), stopped_early })
}

/// Training inputs per method: the positive-term rows and the rows of the
/// second group (unlabeled, or negatives for PN).
struct Groups {
    labeled: Matrix,
    second: Matrix,
}

impl Groups {
    fn new(cfg: &TrainConfig, data: &PUDataset) -> Result<Self> {
        let needs_truth = |what: &str| {
            Error::Config(format!("{} needs ground truth for the unlabeled set ({what})", cfg.method.name()))
        };
        match cfg.method {
            Method::Pn => {
                let truth = data.unlabeled_truth().ok_or_else(|| needs_truth("negatives"))?;
                let negatives: Vec<usize> = (0..truth.len()).filter(|&i| !truth[i].is_positive()).collect();
                if negatives.is_empty() {
                    return Err(Error::InsufficientData("no negatives among the unlabeled points".into()));
                }
                Ok(Groups { labeled: data.positives().clone(), second: data.unlabeled().gather_rows(&negatives) })
            }
            Method::NnpuPlusP => {
                let truth = data.unlabeled_truth().ok_or_else(|| needs_truth("oracle positives"))?;
                let mut pool: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].is_positive()).collect();
                if pool.len() < cfg.oracle_extra_p {
                    return Err(Error::Config(format!(
                        "oracle_extra_p = {} but only {} true positives in the unlabeled set",
                        cfg.oracle_extra_p,
                        pool.len()
                    )));
                }
                let mut rng = rng::stream(cfg.seed, ORACLE_STREAM, 0);
                let (picked, _) = pool.partial_shuffle(&mut rng, cfg.oracle_extra_p);
                let extra = data.unlabeled().gather_rows(picked);
                Ok(Groups { labeled: data.positives().vstack(&extra)?, second: data.unlabeled().clone() })
            }
            _ => Ok(Groups { labeled: data.positives().clone(), second: data.unlabeled().clone() }),
        }
    }
}
