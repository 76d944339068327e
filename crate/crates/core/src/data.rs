//! PU datasets, the two-dimensional sine benchmark, and stratified minibatches.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

const GENERATOR_STREAM: u64 = 2;
const MINIBATCH_STREAM: u64 = 3;

/// Shift applied to `x2` of every generated point, away from the boundary.
pub const SINE_SHIFT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` or `-1.0`.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// Accepts exactly `+1` and `-1`.
    pub fn from_sign(value: f64) -> Result<Self> {
        if value == 1.0 {
            Ok(Label::Positive)
        } else if value == -1.0 {
            Ok(Label::Negative)
        } else {
            Err(Error::InvalidArgument(format!("label must be +1 or -1, got {value}")))
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// Labeled positives, unlabeled data and a labeled test set, with the class prior.
///
/// `unlabeled_truth` holds hidden labels for diagnostics; training never reads
/// it except to draw oracle positives for the nnPU+P baseline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PUDataset {
    positives: Matrix,
    unlabeled: Matrix,
    unlabeled_truth: Option<Vec<Label>>,
    test_features: Matrix,
    test_labels: Vec<Label>,
    prior: f64,
}

impl PUDataset {
    pub fn new(
        positives: Matrix,
        unlabeled: Matrix,
        unlabeled_truth: Option<Vec<Label>>,
        test_features: Matrix,
        test_labels: Vec<Label>,
        prior: f64,
    ) -> Result<Self> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::Config(format!("class prior must lie strictly inside (0, 1), got {prior}")));
        }
        for (name, m) in [("positive", &positives), ("unlabeled", &unlabeled), ("test", &test_features)] {
            if m.rows() == 0 {
                return Err(Error::InsufficientData(format!("{name} set is empty")));
            }
            if m.cols() == 0 {
                return Err(Error::Shape(format!("{name} set has zero-dimensional features")));
            }
            if let Some(i) = m.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} row {} has a non-finite feature", i / m.cols())));
            }
        }
        let dim = positives.cols();
        for (name, m) in [("unlabeled", &unlabeled), ("test", &test_features)] {
            if m.cols() != dim {
                return Err(Error::Shape(format!("{name} features have dimension {}, positives have {dim}", m.cols())));
            }
        }
        if let Some(truth) = &unlabeled_truth {
            if truth.len() != unlabeled.rows() {
                return Err(Error::Shape(format!(
                    "{} unlabeled truth labels for {} unlabeled rows",
                    truth.len(),
                    unlabeled.rows()
                )));
            }
        }
        if test_labels.len() != test_features.rows() {
            return Err(Error::Shape(format!(
                "{} test labels for {} test rows",
                test_labels.len(),
                test_features.rows()
            )));
        }
        Ok(PUDataset { positives, unlabeled, unlabeled_truth, test_features, test_labels, prior })
    }

    pub fn positives(&self) -> &Matrix {
        &self.positives
    }

    pub fn unlabeled(&self) -> &Matrix {
        &self.unlabeled
    }

    pub fn unlabeled_truth(&self) -> Option<&[Label]> {
        self.unlabeled_truth.as_deref()
    }

    pub fn test_features(&self) -> &Matrix {
        &self.test_features
    }

    pub fn test_labels(&self) -> &[Label] {
        &self.test_labels
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn dim(&self) -> usize {
        self.positives.cols()
    }

    pub fn n_p(&self) -> usize {
        self.positives.rows()
    }

    pub fn n_u(&self) -> usize {
        self.unlabeled.rows()
    }

    /// Fraction of positives among the test labels.
    pub fn test_positive_fraction(&self) -> f64 {
        positive_fraction(&self.test_labels)
    }
}

fn positive_fraction(labels: &[Label]) -> f64 {
    labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64
}

/// Labels a raw sine-benchmark point and applies the display shift:
/// positive iff `sin(x1) < x2`, then `x2` moves by `+0.2` or `-0.2`.
pub fn sine_point(x1: f64, x2: f64) -> (Label, [f64; 2]) {
    if libm::sin(x1) < x2 {
        (Label::Positive, [x1, x2 + SINE_SHIFT])
    } else {
        (Label::Negative, [x1, x2 - SINE_SHIFT])
    }
}

fn draw_sine_point<R: Rng>(rng: &mut R) -> (Label, [f64; 2]) {
    let x1 = rng.gen_range(0.0..10.0);
    let x2 = rng.gen_range(-1.5..1.5);
    sine_point(x1, x2)
}

/// The sine-boundary benchmark: `x1 ~ U(0, 10)`, `x2 ~ U(-1.5, 1.5)`.
///
/// Positives are drawn by rejection from the positive class; unlabeled and
/// test points are independent draws from the marginal. The prior is the
/// positive fraction of the test set.
pub fn generate_sine_dataset(n_p: usize, n_u: usize, n_test: usize, seed: u64) -> Result<PUDataset> {
    if n_p == 0 || n_u == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "counts must be positive, got n_p={n_p} n_u={n_u} n_test={n_test}"
        )));
    }
    let mut positives = Vec::with_capacity(2 * n_p);
    let mut rng_p = rng::stream(seed, GENERATOR_STREAM, 0);
    while positives.len() < 2 * n_p {
        let (label, x) = draw_sine_point(&mut rng_p);
        if label.is_positive() {
            positives.extend_from_slice(&x);
        }
    }

    let marginal = |index: u64, n: usize| {
        let mut rng = rng::stream(seed, GENERATOR_STREAM, index);
        let mut features = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (label, x) = draw_sine_point(&mut rng);
            features.extend_from_slice(&x);
            labels.push(label);
        }
        (features, labels)
    };
    let (unlabeled, truth) = marginal(1, n_u);
    let (test, test_labels) = marginal(2, n_test);

    let prior = positive_fraction(&test_labels);
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::InsufficientData(format!(
            "test set of {n_test} points is single-class, cannot set the prior"
        )));
    }
    PUDataset::new(
        Matrix::from_vec(n_p, 2, positives)?,
        Matrix::from_vec(n_u, 2, unlabeled)?,
        Some(truth),
        Matrix::from_vec(n_test, 2, test)?,
        test_labels,
        prior,
    )
}

/// Indices of one minibatch. `s` indexes the selected set in its insertion
/// order, not the unlabeled set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Minibatch {
    pub p: Vec<usize>,
    pub u: Vec<usize>,
    pub s: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchPlan {
    pub batches: Vec<Minibatch>,
    pub epoch_seed: u64,
}

/// Shuffles P, U and S separately and deals each into the same number of
/// batches, keeping the P:U:S ratio per batch.
///
/// The batch count is `ceil((n_p + n_u + n_s) / batch_size)`, lowered to
/// `min(n_p, n_u)` when needed so every batch holds at least one P and one U
/// index. Group sizes differ by at most one, larger shares first.
pub fn make_minibatches(
    n_p: usize,
    n_u: usize,
    n_s: usize,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<MinibatchPlan> {
    if batch_size < 2 {
        return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
    }
    if n_p == 0 || n_u == 0 {
        return Err(Error::Config(format!("minibatches need positive and unlabeled data, got n_p={n_p} n_u={n_u}")));
    }
    let total = n_p + n_u + n_s;
    let count = total.div_ceil(batch_size).min(n_p).min(n_u);

    let mut rng = rng::stream(epoch_seed, MINIBATCH_STREAM, 0);
    let mut shuffled = |n: usize| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    };
    let (p, u, s) = (shuffled(n_p), shuffled(n_u), shuffled(n_s));

    let mut batches: Vec<Minibatch> = (0..count).map(|_| Minibatch::default()).collect();
    deal(&p, &mut batches, |b| &mut b.p);
    deal(&u, &mut batches, |b| &mut b.u);
    deal(&s, &mut batches, |b| &mut b.s);
    Ok(MinibatchPlan { batches, epoch_seed })
}

fn deal(order: &[usize], batches: &mut [Minibatch], field: impl Fn(&mut Minibatch) -> &mut Vec<usize>) {
    let (base, extra) = (order.len() / batches.len(), order.len() % batches.len());
    let mut start = 0;
    for (b, batch) in batches.iter_mut().enumerate() {
        let end = start + base + usize::from(b < extra);
        field(batch).extend_from_slice(&order[start..end]);
        start = end;
    }
}
