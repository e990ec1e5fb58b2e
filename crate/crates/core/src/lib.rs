//! Mini-batch SGD for two-layer shifted-ReLU networks on Kronecker-structured
//! data, with per-step cost independent of the input dimension.
//!
//! Samples are `x_i = b_i ⊗ a_i` for factor columns `a_i ∈ R^p`, `b_i ∈ R^q`.
//! The fast trainer ([`trainer`]) keeps one max-tree of neuron scores per
//! sample and stores weights as combinations of training samples, so a step
//! only touches fire sets, labels and cached factor Grams. The dense trainer in
//! [`network`] is the reference it is tested against.
//!
//! All indices in this API are 0-based.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gram;
pub mod kernels;
pub mod matrix;
pub mod maxtree;
pub mod metrics;
pub mod network;
pub mod params;
pub mod rng;
pub mod sampler;
pub mod trainer;
pub mod trajectory;
pub mod verify;

pub use dataset::{generate_synthetic, KroneckerDataset};
pub use error::{Error, Result};
pub use gram::{h_cts_mc, h_dis, h_dynamic, lambda_min_sym, GramKind, GramReport};
pub use kernels::{scores_for_weight, GramCache};
pub use matrix::RealMatrix;
pub use maxtree::{ThresholdTree, TreeBank};
pub use params::Param;
pub use network::{default_tau, init_network, sgd_gradient_naive, train_naive, TwoLayerNet};
pub use sampler::BatchSampler;
pub use trainer::{init_trainer, StepReport, TrainerState};
pub use trajectory::{StepRecord, TrainConfig, Trajectory};
