//! Empirical risk estimators over score vectors.
//!
//! Each estimator returns its value together with the gradient signal with
//! respect to every score it consumed, so the caller can backpropagate
//! `sum_i dscore[i] * score[i]` through the network.
//!
//! Notation: `l` is the surrogate loss, `pi` the class prior, P the labeled
//! positives, U the unlabeled data, S the positives selected out of U.
//!
//! - PN: `pi * mean_P l(s) + (1 - pi) * mean_N l(-s)`
//! - uPU: `pi * mean_P l(s) + [mean_U l(-s) - pi * mean_P l(-s)]`
//! - nnPU: the bracket is clamped at zero; when it falls below `-beta` the
//!   step ascends the bracket instead, scaled by `gamma`.
//! - aaPU: as nnPU, with S joining only the positive term. The bracket (the
//!   negative-class risk estimate) uses P alone, since S is a biased sample
//!   of far-from-boundary positives.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    Pn,
    Upu,
    Nnpu,
    Aapu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskConfig {
    pub estimator: Estimator,
    pub loss: LossKind,
    /// Class prior `pi = P(y = +1)`, strictly inside (0, 1).
    pub prior: f64,
    /// Clamp threshold: the ascent branch fires when the negative part is below `-beta`.
    pub nnpu_beta: f64,
    /// Scale of the ascent step.
    pub nnpu_gamma: f64,
    /// Divide the aaPU positive sum over `P + S` by `|P|` instead of `|P| + |S|`.
    pub literal_normalization: bool,
}

impl RiskConfig {
    /// `beta = 0`, `gamma = 1`, mean normalization.
    pub fn new(estimator: Estimator, loss: LossKind, prior: f64) -> Self {
        RiskConfig { estimator, loss, prior, nnpu_beta: 0.0, nnpu_gamma: 1.0, literal_normalization: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::Config(format!("class prior must lie strictly inside (0, 1), got {}", self.prior)));
        }
        self.loss
            .require_surrogate()
            .map_err(|_| Error::Config("risk estimators need the sigmoid or logistic loss".into()))?;
        if !(self.nnpu_beta >= 0.0 && self.nnpu_beta.is_finite()) {
            return Err(Error::Config(format!("nnpu_beta must be >= 0, got {}", self.nnpu_beta)));
        }
        if !(self.nnpu_gamma > 0.0 && self.nnpu_gamma.is_finite()) {
            return Err(Error::Config(format!("nnpu_gamma must be > 0, got {}", self.nnpu_gamma)));
        }
        Ok(())
    }
}

/// Objective value and its gradient with respect to each score group.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskOutput {
    pub value: f64,
    pub dscore_p: Vec<f64>,
    pub dscore_s: Vec<f64>,
    /// Unlabeled scores, or negatives for [`pn_risk`].
    pub dscore_u: Vec<f64>,
    /// Whether the ascent branch produced the gradients.
    pub clamped: bool,
    /// `mean_U l(-s) - pi * mean_P l(-s)` before clamping; the negative-class
    /// term `(1 - pi) * mean_N l(-s)` for [`pn_risk`].
    pub negative_part: f64,
}

/// `weight * sum_i l(sign * s_i)`, accumulating `weight * sign * l'(sign * s_i)` into `grad`.
fn loss_term(scores: &[f64], sign: f64, weight: f64, loss: LossKind, grad: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (g, &s) in grad.iter_mut().zip(scores) {
        sum += loss.value(sign * s);
        *g += weight * sign * loss.derivative(sign * s);
    }
    weight * sum
}

fn require_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InsufficientData(format!("{name} scores are empty")));
    }
    check_finite(name, scores)
}

fn check_finite(name: &str, scores: &[f64]) -> Result<()> {
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} score {i} is not finite")));
    }
    Ok(())
}

/// Supervised risk from positive and negative scores.
pub fn pn_risk(scores_p: &[f64], scores_n: &[f64], cfg: &RiskConfig) -> Result<RiskOutput> {
    cfg.validate()?;
    require_scores("positive", scores_p)?;
    require_scores("negative", scores_n)?;
    let mut dscore_p = vec![0.0; scores_p.len()];
    let mut dscore_n = vec![0.0; scores_n.len()];
    let positive = loss_term(scores_p, 1.0, cfg.prior / scores_p.len() as f64, cfg.loss, &mut dscore_p);
    let negative = loss_term(scores_n, -1.0, (1.0 - cfg.prior) / scores_n.len() as f64, cfg.loss, &mut dscore_n);
    Ok(RiskOutput {
        value: positive + negative,
        dscore_p,
        dscore_s: Vec::new(),
        dscore_u: dscore_n,
        clamped: false,
        negative_part: negative,
    })
}

/// Positive term and negative part, each with its own gradients.
struct Parts {
    positive: f64,
    negative: f64,
    pos_p: Vec<f64>,
    pos_s: Vec<f64>,
    neg_p: Vec<f64>,
    neg_u: Vec<f64>,
}

fn pu_parts(scores_p: &[f64], scores_s: &[f64], scores_u: &[f64], cfg: &RiskConfig) -> Parts {
    let n_p = scores_p.len() as f64;
    let divisor = if cfg.literal_normalization { n_p } else { n_p + scores_s.len() as f64 };
    let weight = cfg.prior / divisor;

    let mut pos_p = vec![0.0; scores_p.len()];
    let mut pos_s = vec![0.0; scores_s.len()];
    // Sum over P then S in one accumulator so an empty S reproduces nnPU exactly.
    let mut sum = 0.0;
    for (g, &s) in pos_p.iter_mut().zip(scores_p).chain(pos_s.iter_mut().zip(scores_s)) {
        sum += cfg.loss.value(s);
        *g = weight * cfg.loss.derivative(s);
    }
    let positive = weight * sum;

    let mut neg_p = vec![0.0; scores_p.len()];
    let mut neg_u = vec![0.0; scores_u.len()];
    let unlabeled = loss_term(scores_u, -1.0, 1.0 / scores_u.len() as f64, cfg.loss, &mut neg_u);
    let correction = loss_term(scores_p, -1.0, cfg.prior / n_p, cfg.loss, &mut neg_p);
    neg_p.iter_mut().for_each(|g| *g = -*g);

    Parts { positive, negative: unlabeled - correction, pos_p, pos_s, neg_p, neg_u }
}

/// Unbiased PU risk; may go negative.
pub fn upu_risk(scores_p: &[f64], scores_u: &[f64], cfg: &RiskConfig) -> Result<RiskOutput> {
    cfg.validate()?;
    require_scores("positive", scores_p)?;
    require_scores("unlabeled", scores_u)?;
    let parts = pu_parts(scores_p, &[], scores_u, cfg);
    let dscore_p = parts.pos_p.iter().zip(&parts.neg_p).map(|(a, b)| a + b).collect();
    Ok(RiskOutput {
        value: parts.positive + parts.negative,
        dscore_p,
        dscore_s: Vec::new(),
        dscore_u: parts.neg_u,
        clamped: false,
        negative_part: parts.negative,
    })
}

fn non_negative(parts: Parts, cfg: &RiskConfig) -> RiskOutput {
    let value = parts.positive + parts.negative.max(0.0);
    if parts.negative < -cfg.nnpu_beta {
        let ascend = |g: &f64| -cfg.nnpu_gamma * g;
        RiskOutput {
            value,
            dscore_p: parts.neg_p.iter().map(ascend).collect(),
            dscore_s: vec![0.0; parts.pos_s.len()],
            dscore_u: parts.neg_u.iter().map(ascend).collect(),
            clamped: true,
            negative_part: parts.negative,
        }
    } else {
        RiskOutput {
            value,
            dscore_p: parts.pos_p.iter().zip(&parts.neg_p).map(|(a, b)| a + b).collect(),
            dscore_s: parts.pos_s,
            dscore_u: parts.neg_u,
            clamped: false,
            negative_part: parts.negative,
        }
    }
}

/// Non-negative PU objective with the ascent correction.
pub fn nnpu_objective(scores_p: &[f64], scores_u: &[f64], cfg: &RiskConfig) -> Result<RiskOutput> {
    cfg.validate()?;
    require_scores("positive", scores_p)?;
    require_scores("unlabeled", scores_u)?;
    Ok(non_negative(pu_parts(scores_p, &[], scores_u, cfg), cfg))
}

/// nnPU with selected positives `scores_s` added to the positive term only.
pub fn aapu_objective(scores_p: &[f64], scores_s: &[f64], scores_u: &[f64], cfg: &RiskConfig) -> Result<RiskOutput> {
    cfg.validate()?;
    require_scores("positive", scores_p)?;
    require_scores("unlabeled", scores_u)?;
    check_finite("selected", scores_s)?;
    Ok(non_negative(pu_parts(scores_p, scores_s, scores_u, cfg), cfg))
}

/// Dispatches on `cfg.estimator`. For PN, `scores_u` holds the negatives and
/// `scores_s` must be empty for every estimator except aaPU.
pub fn evaluate(scores_p: &[f64], scores_s: &[f64], scores_u: &[f64], cfg: &RiskConfig) -> Result<RiskOutput> {
    if cfg.estimator != Estimator::Aapu && !scores_s.is_empty() {
        return Err(Error::Contract(format!(
            "{:?} does not use selected positives, got {}",
            cfg.estimator,
            scores_s.len()
        )));
    }
    match cfg.estimator {
        Estimator::Pn => pn_risk(scores_p, scores_u, cfg),
        Estimator::Upu => upu_risk(scores_p, scores_u, cfg),
        Estimator::Nnpu => nnpu_objective(scores_p, scores_u, cfg),
        Estimator::Aapu => aapu_objective(scores_p, scores_s, scores_u, cfg),
    }
}
