//! Behaviour fingerprints, population standardisation and cluster profiles.
//!
//! All variances in this crate use the population convention (divide by n).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TurbineSeries;
use crate::matrix::Matrix;

/// Number of fingerprint features.
pub const N_FEATURES: usize = 6;

/// Column names in fingerprint order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mean_power",
    "std_power",
    "cv",
    "zero_ratio",
    "ramp_mean",
    "ramp_std",
];

/// Index of the zero-ratio column.
pub const ZERO_RATIO: usize = 3;

/// Relative mean threshold below which the cv denominator is guarded.
pub const CV_EPS: f64 = 1e-6;
/// Upper bound of the guarded cv.
pub const CV_CAP: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("series `{id}` has {len} steps, need at least 2")]
    SeriesTooShort { id: String, len: usize },
    #[error("standardisation needs at least 2 fingerprints, got {0}")]
    TooFewRows(usize),
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviourFingerprint {
    pub mean_power: f64,
    pub std_power: f64,
    pub cv: f64,
    pub zero_ratio: f64,
    pub ramp_mean: f64,
    pub ramp_std: f64,
}

impl BehaviourFingerprint {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.mean_power,
            self.std_power,
            self.cv,
            self.zero_ratio,
            self.ramp_mean,
            self.ramp_std,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        Self {
            mean_power: a[0],
            std_power: a[1],
            cv: a[2],
            zero_ratio: a[3],
            ramp_mean: a[4],
            ramp_std: a[5],
        }
    }
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Coefficient of variation with the near-zero-mean guard: when the mean is
/// at most `CV_EPS · capacity` the denominator becomes `CV_EPS · capacity`
/// (result capped at `CV_CAP`), and a zero std always gives 0.
pub fn guarded_cv(mean: f64, std: f64, capacity: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    let floor = CV_EPS * capacity;
    if mean <= floor {
        (std / floor).min(CV_CAP)
    } else {
        std / mean
    }
}

/// Computes the six-feature fingerprint of a power series.
pub fn fingerprint(series: &TurbineSeries) -> Result<BehaviourFingerprint, FeatureError> {
    fingerprint_power(&series.meta.id, &series.power, series.meta.capacity_kw)
}

pub fn fingerprint_power(
    id: &str,
    power: &[f64],
    capacity_kw: f64,
) -> Result<BehaviourFingerprint, FeatureError> {
    if power.len() < 2 {
        return Err(FeatureError::SeriesTooShort {
            id: id.to_string(),
            len: power.len(),
        });
    }
    let (mean_power, std_power) = mean_std(power);
    let zero_ratio = power.iter().filter(|&&p| p == 0.0).count() as f64 / power.len() as f64;
    let ramps: Vec<f64> = power.windows(2).map(|w| w[1] - w[0]).collect();
    let (ramp_mean, ramp_std) = mean_std(&ramps);
    Ok(BehaviourFingerprint {
        mean_power,
        std_power,
        cv: guarded_cv(mean_power, std_power, capacity_kw),
        zero_ratio,
        ramp_mean,
        ramp_std,
    })
}

/// Per-column z-transform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Zero-variance columns; these map to 0 and cannot be inverted.
    pub degenerate: Vec<bool>,
    /// Columns passed through unscaled.
    pub passthrough: Vec<bool>,
}

impl Scaler {
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| {
                if self.passthrough[j] {
                    x
                } else if self.degenerate[j] {
                    0.0
                } else {
                    (x - self.means[j]) / self.stds[j]
                }
            })
            .collect()
    }

    /// Maps a standardised row back to raw units. Degenerate columns come back
    /// as their (constant) mean.
    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &z)| {
                if self.passthrough[j] {
                    z
                } else if self.degenerate[j] {
                    self.means[j]
                } else {
                    z * self.stds[j] + self.means[j]
                }
            })
            .collect()
    }
}

/// Standardised feature rows plus the scaler that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub data: Matrix,
    pub scaler: Scaler,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardiseOptions {
    /// When false the zero-ratio column keeps its raw fraction.
    pub standardise_zero_ratio: bool,
}

impl Default for StandardiseOptions {
    fn default() -> Self {
        Self {
            standardise_zero_ratio: true,
        }
    }
}

/// Column-wise z-scoring of arbitrary rows. `passthrough[j]` leaves column `j`
/// untouched.
pub fn standardise_rows(raw: &Matrix, passthrough: &[bool]) -> Scaler {
    let d = raw.cols();
    let mut means = Vec::with_capacity(d);
    let mut stds = Vec::with_capacity(d);
    let mut degenerate = Vec::with_capacity(d);
    for j in 0..d {
        let (m, s) = mean_std(&raw.column(j));
        means.push(m);
        stds.push(s);
        degenerate.push(s <= 1e-12 * m.abs().max(1.0));
    }
    Scaler {
        means,
        stds,
        degenerate,
        passthrough: passthrough.to_vec(),
    }
}

/// Applies `scaler` to every row.
pub fn apply_scaler(raw: &Matrix, scaler: Scaler) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = raw.iter_rows().map(|r| scaler.transform(r)).collect();
    FeatureMatrix {
        data: if rows.is_empty() {
            Matrix::zeros(0, raw.cols())
        } else {
            Matrix::from_rows(&rows)
        },
        scaler,
    }
}

/// Standardises fingerprints across the population.
pub fn standardise(
    fingerprints: &[BehaviourFingerprint],
    options: StandardiseOptions,
) -> Result<FeatureMatrix, FeatureError> {
    if fingerprints.len() < 2 {
        return Err(FeatureError::TooFewRows(fingerprints.len()));
    }
    let rows: Vec<[f64; N_FEATURES]> = fingerprints.iter().map(|f| f.to_array()).collect();
    let raw = Matrix::from_rows(&rows);
    let mut passthrough = vec![false; N_FEATURES];
    passthrough[ZERO_RATIO] = !options.standardise_zero_ratio;
    let scaler = standardise_rows(&raw, &passthrough);
    Ok(apply_scaler(&raw, scaler))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: usize,
    pub count: usize,
    pub means: [f64; N_FEATURES],
    pub stds: [f64; N_FEATURES],
}

/// Per-cluster statistics. Features are in standardised space except the
/// zero-ratio column, which is reported in raw fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub clusters: Vec<ClusterStats>,
}

pub fn cluster_profile(
    matrix: &FeatureMatrix,
    labels: &[usize],
    zero_ratios: &[f64],
) -> Result<ClusterProfile, FeatureError> {
    let n = matrix.rows();
    if labels.len() != n || zero_ratios.len() != n {
        return Err(FeatureError::LengthMismatch {
            labels: labels.len(),
            rows: n,
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut clusters = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut means = [0.0; N_FEATURES];
        let mut stds = [0.0; N_FEATURES];
        for j in 0..N_FEATURES.min(matrix.data.cols()) {
            let col: Vec<f64> = members
                .iter()
                .map(|&i| {
                    if j == ZERO_RATIO {
                        zero_ratios[i]
                    } else {
                        matrix.data.row(i)[j]
                    }
                })
                .collect();
            let (m, s) = mean_std(&col);
            means[j] = m;
            stds[j] = s;
        }
        clusters.push(ClusterStats {
            cluster: c,
            count: members.len(),
            means,
            stds,
        });
    }
    Ok(ClusterProfile { clusters })
}
