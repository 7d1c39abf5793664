//! Short-term power forecasting per behaviour cluster.
//!
//! Each turbine is a client holding stride-1 windows of `LAGS` hourly input
//! steps and `HORIZON` normalised power targets. A cluster trains one
//! LSTM–MLP model with FedAvg; day-ahead trajectories are stitched together
//! from consecutive `HORIZON`-step predictions.

mod filter;
mod model;
mod rolling;
mod train;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{chronological_split, DataError, TurbineSeries};

pub use filter::{exclusion_reason, filter_uninformative_clients, ExclusionReason, FilterThresholds};
pub use model::{ModelDims, ModelParams};
pub use rolling::{rolling_forecast, ForecastTrajectory, Predictor, RollingMode};
pub use train::{
    batch_gradient, evaluate_set, fedavg, local_train, set_metrics, train_cluster_fl, FlOptions, FlOutcome,
    Optimizer, RoundRecord, TrainHyper,
};
pub use window::{build_windows, NormConfig, SeriesFeatures, WindowSample, WindowSet, POWER_COL};

/// Input history length in hours.
pub const LAGS: usize = 24;
/// Steps predicted per model call.
pub const HORIZON: usize = 3;
/// Per-step input features.
pub const N_INPUTS: usize = 9;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("series `{id}` has {len} steps, need at least {min}")]
    SeriesTooShort { id: String, len: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("cluster has no training samples")]
    EmptyCluster,
    #[error("forecast from step {start} over {horizon} steps needs {lags} steps of history and data through the horizon; series has {len}")]
    InsufficientHistory {
        start: usize,
        horizon: usize,
        len: usize,
        lags: usize,
    },
    #[error("invalid training hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("malformed model artifact: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One client's local data: chronological train and validation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub id: String,
    pub train: WindowSet,
    pub validation: WindowSet,
    /// FedAvg weight, the number of training windows.
    pub n_samples: usize,
}

impl ClientDataset {
    pub fn new(id: String, train: WindowSet, validation: WindowSet) -> Self {
        let n_samples = train.len();
        Self {
            id,
            train,
            validation,
            n_samples,
        }
    }

    /// Splits `series` chronologically and windows both parts.
    pub fn from_series(series: &TurbineSeries, train_fraction: f64, norm: &NormConfig) -> Result<Self, ForecastError> {
        let (train, val) = chronological_split(series, train_fraction, LAGS + HORIZON)?;
        Ok(Self::new(
            series.meta.id.clone(),
            WindowSet::single(SeriesFeatures::from_series(&train, norm)),
            WindowSet::single(SeriesFeatures::from_series(&val, norm)),
        ))
    }
}

/// Everything needed to reload a trained model for inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub lags: usize,
    pub horizon: usize,
    pub norm: NormConfig,
    pub hyper: TrainHyper,
    pub params: ModelParams,
}

impl ModelArtifact {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(params: ModelParams, norm: NormConfig, hyper: TrainHyper) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            lags: LAGS,
            horizon: HORIZON,
            norm,
            hyper,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, ForecastError> {
        let a: Self = serde_json::from_str(s).map_err(|e| ForecastError::MalformedModel(e.to_string()))?;
        if a.format_version != Self::FORMAT_VERSION {
            return Err(ForecastError::MalformedModel(format!("unsupported version {}", a.format_version)));
        }
        if a.lags != LAGS || a.horizon != HORIZON || a.params.values.len() != a.params.dims.n_params() {
            return Err(ForecastError::MalformedModel("inconsistent dimensions".into()));
        }
        Ok(a)
    }
}
