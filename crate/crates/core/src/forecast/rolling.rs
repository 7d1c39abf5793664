//! Day-ahead trajectories assembled from successive `HORIZON`-step blocks.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{ForecastError, ModelParams, NormConfig, SeriesFeatures, HORIZON, LAGS, N_INPUTS, POWER_COL};
use crate::data::{TurbineSeries, POWER_SLACK};

/// Anything that maps a `LAGS × N_INPUTS` input block to `HORIZON` outputs.
pub trait Predictor {
    fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>, ForecastError>;
}

impl Predictor for ModelParams {
    fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>, ForecastError> {
        self.forward(inputs)
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> Predictor for F {
    fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>, ForecastError> {
        Ok(self(inputs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollingMode {
    /// Every block sees measured power lags.
    #[default]
    TeacherForced,
    /// Predicted power replaces measured lags once the trajectory starts.
    Recursive,
}

impl RollingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TeacherForced => "teacher_forced",
            Self::Recursive => "recursive",
        }
    }
}

impl std::str::FromStr for RollingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "teacher_forced" => Ok(Self::TeacherForced),
            "recursive" => Ok(Self::Recursive),
            other => Err(format!("unknown rolling mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTrajectory {
    pub id: String,
    pub mode: RollingMode,
    pub timestamps: Vec<NaiveDateTime>,
    pub measured_kw: Vec<f64>,
    pub predicted_kw: Vec<f64>,
    /// Number of predictor calls.
    pub invocations: usize,
}

/// Forecasts `horizon` steps starting at step `start` of `series`.
///
/// Meteorological inputs are always measured values, so the series must
/// cover `start + horizon` steps in both modes. Fed-back predictions are
/// clamped to `[0, POWER_SLACK]`; emitted values are clamped to
/// `[0, capacity]` kW.
pub fn rolling_forecast<P: Predictor + ?Sized>(
    model: &P,
    series: &TurbineSeries,
    norm: &NormConfig,
    start: usize,
    horizon: usize,
    mode: RollingMode,
) -> Result<ForecastTrajectory, ForecastError> {
    if start < LAGS || start + horizon > series.len() {
        return Err(ForecastError::InsufficientHistory {
            start,
            horizon,
            len: series.len(),
            lags: LAGS,
        });
    }
    let features = SeriesFeatures::from_series(&series.slice(start - LAGS, start + horizon), norm);
    let mut inputs = features.inputs.as_slice().to_vec();
    let cap = series.meta.capacity_kw;
    let mut predicted = Vec::with_capacity(horizon);
    let mut invocations = 0;
    while predicted.len() < horizon {
        let at = predicted.len();
        let block = &inputs[at * N_INPUTS..(at + LAGS) * N_INPUTS];
        let out = model.predict(block)?;
        invocations += 1;
        let take = HORIZON.min(horizon - at);
        for (h, &y) in out.iter().take(take).enumerate() {
            if mode == RollingMode::Recursive {
                inputs[(LAGS + at + h) * N_INPUTS + POWER_COL] = y.clamp(0.0, POWER_SLACK);
            }
            predicted.push((y * cap).clamp(0.0, cap));
        }
    }
    Ok(ForecastTrajectory {
        id: series.meta.id.clone(),
        mode,
        timestamps: (start..start + horizon).map(|t| series.timestamp(t)).collect(),
        measured_kw: series.power[start..start + horizon].to_vec(),
        predicted_kw: predicted,
        invocations,
    })
}
