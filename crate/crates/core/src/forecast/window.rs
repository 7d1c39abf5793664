//! Per-step model inputs and sliding windows.

use std::f64::consts::PI;

use chrono::Timelike;
use serde::{Deserialize, Serialize};

use super::{ForecastError, HORIZON, LAGS, N_INPUTS};
use crate::data::{TurbineSeries, POWER_SLACK};
use crate::matrix::Matrix;

/// Column of normalised power in the per-step input matrix.
pub const POWER_COL: usize = 0;

/// Constants that map raw channels into model units. Stored with every model
/// so inference uses the training-time mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    pub wind_scale: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub capacity_scale: f64,
    pub age_scale: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            wind_scale: 25.0,
            temp_min: -20.0,
            temp_max: 40.0,
            capacity_scale: 1000.0,
            age_scale: 25.0,
        }
    }
}

/// One turbine's per-step inputs in model units: rows are time steps, columns
/// are normalised power, wind speed, direction sin/cos, temperature, hour
/// sin/cos, capacity and age.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFeatures {
    pub id: String,
    pub capacity_kw: f64,
    pub inputs: Matrix,
}

impl SeriesFeatures {
    pub fn from_series(series: &TurbineSeries, norm: &NormConfig) -> Self {
        let cap = series.meta.capacity_kw;
        let mut data = Vec::with_capacity(series.len() * N_INPUTS);
        for t in 0..series.len() {
            let hour = series.timestamp(t).hour() as f64;
            let (hs, hc) = (2.0 * PI * hour / 24.0).sin_cos();
            let (ds, dc) = series.wind_dir[t].to_radians().sin_cos();
            data.extend_from_slice(&[
                (series.power[t] / cap).clamp(0.0, POWER_SLACK),
                series.wind_speed[t] / norm.wind_scale,
                ds,
                dc,
                (series.temperature[t] - norm.temp_min) / (norm.temp_max - norm.temp_min),
                hs,
                hc,
                cap / norm.capacity_scale,
                series.meta.age / norm.age_scale,
            ]);
        }
        Self {
            id: series.meta.id.clone(),
            capacity_kw: cap,
            inputs: Matrix::from_vec(series.len(), N_INPUTS, data),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn power(&self) -> Vec<f64> {
        self.inputs.column(POWER_COL)
    }

    pub fn n_windows(&self) -> usize {
        (self.len() + 1).saturating_sub(LAGS + HORIZON)
    }
}

/// A materialised window: `LAGS` rows of per-step inputs and `HORIZON`
/// normalised power targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Row-major `LAGS × N_INPUTS`.
    pub inputs: Vec<f64>,
    pub target: [f64; HORIZON],
}

impl WindowSample {
    pub fn lag_power(&self) -> Vec<f64> {
        self.inputs.chunks(N_INPUTS).map(|r| r[POWER_COL]).collect()
    }
}

/// Sliding windows (stride 1) over one or more series, stored as offsets into
/// the series' input matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSet {
    series: Vec<SeriesFeatures>,
    /// (series index, first input row) per window, in chronological order
    /// within each series.
    index: Vec<(usize, usize)>,
}

impl WindowSet {
    pub fn new(series: Vec<SeriesFeatures>) -> Self {
        let mut index = Vec::new();
        for (s, f) in series.iter().enumerate() {
            index.extend((0..f.n_windows()).map(|start| (s, start)));
        }
        Self { series, index }
    }

    pub fn single(series: SeriesFeatures) -> Self {
        Self::new(vec![series])
    }

    /// Pools several sets into one, keeping their order.
    pub fn pooled<'a>(sets: impl IntoIterator<Item = &'a WindowSet>) -> Self {
        Self::new(sets.into_iter().flat_map(|s| s.series.iter().cloned()).collect())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn series(&self) -> &[SeriesFeatures] {
        &self.series
    }

    /// Row-major `LAGS × N_INPUTS` input slice of window `i`.
    pub fn inputs(&self, i: usize) -> &[f64] {
        let (s, start) = self.index[i];
        let m = self.series[s].inputs.as_slice();
        &m[start * N_INPUTS..(start + LAGS) * N_INPUTS]
    }

    pub fn target(&self, i: usize) -> [f64; HORIZON] {
        let (s, start) = self.index[i];
        let m = &self.series[s].inputs;
        std::array::from_fn(|h| m.row(start + LAGS + h)[POWER_COL])
    }

    pub fn sample(&self, i: usize) -> WindowSample {
        WindowSample {
            inputs: self.inputs(i).to_vec(),
            target: self.target(i),
        }
    }

    /// Normalised power at every step that is some window's target.
    pub fn target_series(&self) -> Vec<f64> {
        self.series
            .iter()
            .filter(|f| f.n_windows() > 0)
            .flat_map(|f| f.power().into_iter().skip(LAGS))
            .collect()
    }
}

/// All stride-1 windows of one series.
pub fn build_windows(series: &TurbineSeries, norm: &NormConfig) -> Result<Vec<WindowSample>, ForecastError> {
    if series.len() < LAGS + HORIZON {
        return Err(ForecastError::SeriesTooShort {
            id: series.meta.id.clone(),
            len: series.len(),
            min: LAGS + HORIZON,
        });
    }
    let set = WindowSet::single(SeriesFeatures::from_series(series, norm));
    Ok((0..set.len()).map(|i| set.sample(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::series_with_power;

    #[test]
    fn window_count() {
        let s = series_with_power("a", vec![1.0; 27]);
        assert_eq!(build_windows(&s, &NormConfig::default()).unwrap().len(), 1);
        let s = series_with_power("a", vec![1.0; 26]);
        assert!(matches!(
            build_windows(&s, &NormConfig::default()),
            Err(ForecastError::SeriesTooShort { len: 26, .. })
        ));
    }

    #[test]
    fn encodings() {
        let mut s = series_with_power("a", (0..30).map(|i| i as f64).collect());
        s.wind_dir[0] = 0.0;
        s.wind_dir[1] = 360.0 - 1e-9;
        let f = SeriesFeatures::from_series(&s, &NormConfig::default());
        for t in 0..f.len() {
            let r = f.inputs.row(t);
            assert!((r[2] * r[2] + r[3] * r[3] - 1.0).abs() < 1e-9);
            assert!((r[5] * r[5] + r[6] * r[6] - 1.0).abs() < 1e-9);
        }
        let (a, b) = (f.inputs.row(0), f.inputs.row(1));
        assert!((a[2] - b[2]).abs() < 1e-9 && (a[3] - b[3]).abs() < 1e-9);
        let six = (0..f.len()).find(|&t| s.timestamp(t).hour() == 6).unwrap();
        let r = f.inputs.row(six);
        assert!((r[5] - 1.0).abs() < 1e-15 && r[6].abs() < 1e-15);
    }

    #[test]
    fn windows_align_with_series() {
        let power: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let s = series_with_power("a", power);
        let cap = s.meta.capacity_kw;
        let set = WindowSet::single(SeriesFeatures::from_series(&s, &NormConfig::default()));
        assert_eq!(set.len(), 40 - 27 + 1);
        let w = set.sample(5);
        assert_eq!(w.lag_power()[0], (0.5 / cap).min(POWER_SLACK));
        assert_eq!(w.target[0], s.power[5 + LAGS] / cap);
        assert_eq!(set.target_series().len(), 40 - LAGS);
    }
}
