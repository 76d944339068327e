//! Positive-unlabeled (PU) learning with adaptive large-loss positive selection.
//!
//! The crate contains everything needed to train a scalar-score classifier
//! `g(x)` from labeled positives and unlabeled data:
//!
//! - [`losses`]: sigmoid and logistic surrogates of the margin `t * g(x)`.
//! - [`net`]: a dense ReLU network with batch normalization, dropout,
//!   hand-written backpropagation and Adam.
//! - [`risk`]: the PN, unbiased PU, non-negative PU and augmented PU
//!   objectives, each returning a value plus gradients with respect to scores.
//! - [`selection`]: per-epoch unlabeled loss vectors, top-k large-loss
//!   selection into a permanent set, and 100-bin loss histograms.
//! - [`data`]: the two-dimensional sine benchmark and stratified minibatching.
//! - [`trainer`]: the epoch loop tying the pieces together, plus evaluation.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. All arithmetic is `f64`; transcendental functions come from
//! `libm` so results do not depend on the platform's math library.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod net;
pub mod risk;
mod rng;
pub mod selection;
pub mod trainer;

pub use data::{generate_sine_dataset, make_minibatches, Label, Minibatch, MinibatchPlan, PUDataset};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use losses::{LossKind, Margin};
pub use net::{AdamState, ForwardCache, Gradients, Mlp, MlpSpec, Mode};
pub use risk::{Estimator, RiskConfig, RiskOutput};
pub use selection::{LossHistogram, SelectionState, UnlabeledLossVector};
pub use trainer::{EpochRecord, Method, SelectionConfig, TrainConfig, TrainOutcome};
