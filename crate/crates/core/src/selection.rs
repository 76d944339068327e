//! Large-loss selection of likely positives out of the unlabeled set.
//!
//! Every unlabeled point is scored as if it were negative; the points with
//! the largest loss are the ones the network refuses to call negative, and
//! are promoted into the selected set S for good.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::LossKind;
use crate::net::Mlp;

pub const HISTOGRAM_BINS: usize = 100;

/// `l(-g(x))` for every unlabeled point at one epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnlabeledLossVector {
    losses: Vec<f64>,
    epoch: usize,
    loss_kind: LossKind,
}

impl UnlabeledLossVector {
    pub fn new(losses: Vec<f64>, epoch: usize, loss_kind: LossKind) -> Result<Self> {
        loss_kind.require_surrogate()?;
        if let Some(i) = losses.iter().position(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss {i} is {}, expected finite and >= 0", losses[i])));
        }
        Ok(UnlabeledLossVector { losses, epoch, loss_kind })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

/// Scores `unlabeled` in eval mode and applies the loss with target `-1`.
pub fn unlabeled_losses(
    params: &Mlp,
    unlabeled: &Matrix,
    loss_kind: LossKind,
    epoch: usize,
) -> Result<UnlabeledLossVector> {
    loss_kind.require_surrogate()?;
    let scores = params.predict(unlabeled)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric { epoch, detail: format!("unlabeled score {i} is not finite") });
    }
    let losses = scores.iter().map(|&s| loss_kind.value(-s)).collect();
    UnlabeledLossVector::new(losses, epoch, loss_kind)
}

/// The `k` non-excluded indices with the largest loss, by descending loss
/// and then ascending index. Shorter than `k` if the pool runs out.
pub fn select_top_k(lu: &UnlabeledLossVector, k: usize, excluded: &BTreeSet<usize>) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..lu.len()).filter(|i| !excluded.contains(i)).collect();
    let order = |a: &usize, b: &usize| lu.losses[*b].total_cmp(&lu.losses[*a]).then(a.cmp(b));
    if k < candidates.len() {
        if k == 0 {
            return Vec::new();
        }
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    candidates
}

/// Unlabeled rows whose features are bit-identical to some labeled positive.
pub fn duplicates_of_positives(positives: &Matrix, unlabeled: &Matrix) -> BTreeSet<usize> {
    // Adding 0.0 folds -0.0 into +0.0.
    let key = |row: &[f64]| row.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>();
    let known: BTreeSet<Vec<u64>> = positives.iter_rows().map(key).collect();
    unlabeled.iter_rows().enumerate().filter(|(_, row)| known.contains(&key(row))).map(|(i, _)| i).collect()
}

/// The accumulated selected set S and its schedule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionState {
    /// Members in the order they were added.
    selected: Vec<usize>,
    members: BTreeSet<usize>,
    /// Never eligible, e.g. copies of labeled positives.
    blocked: BTreeSet<usize>,
    n_u: usize,
    start_epoch: usize,
    per_epoch: usize,
    exclude_selected: bool,
}

impl SelectionState {
    pub fn new(n_u: usize, start_epoch: usize, per_epoch: usize) -> Self {
        SelectionState {
            selected: Vec::new(),
            members: BTreeSet::new(),
            blocked: BTreeSet::new(),
            n_u,
            start_epoch,
            per_epoch,
            exclude_selected: true,
        }
    }

    /// With `false`, members of S stay eligible, so a round may re-pick them
    /// and add fewer than `per_epoch` new points.
    pub fn with_exclude_selected(mut self, exclude: bool) -> Self {
        self.exclude_selected = exclude;
        self
    }

    pub fn with_blocked(mut self, blocked: BTreeSet<usize>) -> Self {
        self.blocked = blocked;
        self
    }

    /// Selected indices, oldest first.
    pub fn indices(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.contains(&index)
    }

    pub fn start_epoch(&self) -> usize {
        self.start_epoch
    }

    pub fn per_epoch(&self) -> usize {
        self.per_epoch
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Whether selection runs at the end of `epoch`.
    pub fn is_active(&self, epoch: usize) -> bool {
        self.per_epoch > 0 && epoch >= self.start_epoch
    }

    /// Indices a selection round may not pick.
    pub fn exclusions(&self) -> BTreeSet<usize> {
        if self.exclude_selected {
            self.members.union(&self.blocked).copied().collect()
        } else {
            self.blocked.clone()
        }
    }

    /// Adds `new_indices` permanently; repeats are ignored.
    pub fn update_selected(&mut self, new_indices: &[usize], epoch: usize) -> Result<()> {
        if epoch < self.start_epoch {
            return Err(Error::Contract(format!(
                "selection update at epoch {epoch} before start epoch {}",
                self.start_epoch
            )));
        }
        if let Some(&i) = new_indices.iter().find(|&&i| i >= self.n_u) {
            return Err(Error::Contract(format!("selected index {i} out of range for {} unlabeled points", self.n_u)));
        }
        for &i in new_indices {
            if self.members.insert(i) {
                self.selected.push(i);
            }
        }
        Ok(())
    }

    /// One selection round: top `per_epoch` eligible indices, then the union.
    /// Returns the indices picked.
    pub fn select_and_update(&mut self, lu: &UnlabeledLossVector) -> Result<Vec<usize>> {
        if lu.len() != self.n_u {
            return Err(Error::Shape(format!("{} losses for {} unlabeled points", lu.len(), self.n_u)));
        }
        let picks = select_top_k(lu, self.per_epoch, &self.exclusions());
        self.update_selected(&picks, lu.epoch())?;
        Ok(picks)
    }
}

/// Loss histogram over 100 equal-width bins.
///
/// Sigmoid losses use `[0, 1]`; logistic losses use `[min, max]` of the data.
/// Bins are half-open except the last, which also holds its right edge. If
/// all logistic losses are equal the edges span `[v, v + 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossHistogram {
    pub bin_edges: Vec<f64>,
    pub counts_total: Vec<u64>,
    pub counts_true_p: Option<Vec<u64>>,
    pub counts_true_n: Option<Vec<u64>>,
    pub epoch: usize,
    pub loss_kind: LossKind,
}

impl LossHistogram {
    pub fn total(&self) -> u64 {
        self.counts_total.iter().sum()
    }
}

pub fn loss_histogram(lu: &UnlabeledLossVector, ground_truth: Option<&[Label]>) -> Result<LossHistogram> {
    if lu.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty loss vector".into()));
    }
    if let Some(truth) = ground_truth {
        if truth.len() != lu.len() {
            return Err(Error::Shape(format!("{} labels for {} losses", truth.len(), lu.len())));
        }
    }
    let (lo, hi) = match lu.loss_kind() {
        LossKind::Sigmoid => (0.0, 1.0),
        _ => {
            let lo = lu.losses().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = lu.losses().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + 1.0)
            }
        }
    };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bin_edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
    bin_edges[HISTOGRAM_BINS] = hi;

    let mut counts_total = vec![0u64; HISTOGRAM_BINS];
    let mut per_class = ground_truth.map(|_| (vec![0u64; HISTOGRAM_BINS], vec![0u64; HISTOGRAM_BINS]));
    for (i, &v) in lu.losses().iter().enumerate() {
        let bin = bin_of(&bin_edges, v);
        counts_total[bin] += 1;
        if let (Some((p, n)), Some(truth)) = (per_class.as_mut(), ground_truth) {
            match truth[i] {
                Label::Positive => p[bin] += 1,
                Label::Negative => n[bin] += 1,
            }
        }
    }
    let (counts_true_p, counts_true_n) = match per_class {
        Some((p, n)) => (Some(p), Some(n)),
        None => (None, None),
    };
    Ok(LossHistogram {
        bin_edges,
        counts_total,
        counts_true_p,
        counts_true_n,
        epoch: lu.epoch(),
        loss_kind: lu.loss_kind(),
    })
}

/// Bin `b` with `edges[b] <= v < edges[b + 1]`, clamped into range.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let last = edges.len() - 2;
    let (lo, hi) = (edges[0], edges[last + 1]);
    let guess = ((v - lo) / (hi - lo) * (last + 1) as f64) as isize;
    let mut b = guess.clamp(0, last as isize) as usize;
    // The division can land one bin off near an edge.
    while b > 0 && v < edges[b] {
        b -= 1;
    }
    while b < last && v >= edges[b + 1] {
        b += 1;
    }
    b
}
