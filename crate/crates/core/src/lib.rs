//! Federated behaviour clustering and per-cluster federated forecasting for
//! fleets of small wind turbines.
//!
//! The pipeline has two stages:
//!
//! 1. Each turbine summarises its long-term power series into a six-feature
//!    behaviour fingerprint ([`features`]). The standardised fingerprints are
//!    clustered with federated K-means seeded by Double Roulette Selection
//!    ([`fedcluster`]), recursively refined by silhouette-driven Auto-split
//!    ([`autosplit`]).
//! 2. Every behaviour cluster trains its own LSTM–MLP short-term forecaster via
//!    FedAvg ([`forecast`]), and the results are scored against geographic and
//!    flat baselines ([`eval`]).
//!
//! [`data`] ingests fleets from CSV or generates synthetic fleets with known
//! behaviour archetypes.

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod autosplit;
pub mod data;
pub mod eval;
pub mod features;
pub mod fedcluster;
pub mod forecast;
pub mod matrix;
pub mod rng;

pub use autosplit::{auto_split, leaf_labels, AutoSplitConfig, ClusterTree, ParamGrid, SplitThresholds};
pub use data::{Fleet, TurbineMeta, TurbineSeries};
pub use features::{BehaviourFingerprint, FeatureMatrix};
pub use fedcluster::{federated_kmeans, CentroidSet, FedKMeansConfig, InitStrategy};
pub use forecast::{ModelParams, TrainHyper};
pub use matrix::Matrix;
