//! Fleet data: turbine metadata and hourly series, CSV ingestion, synthetic
//! fleet generation, spatial subsampling and chronological splitting.

mod io;
mod synth;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_fleet, read_meta, write_fleet, write_meta, write_truth};
pub use synth::{generate_synthetic_fleet, ArchetypeParams, ArchetypeSpec, FleetSpec};

/// Power readings may exceed nameplate capacity by this factor (sensor noise).
pub const POWER_SLACK: f64 = 1.2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("schema violation at row {row}, column `{column}`: {reason}")]
    SchemaViolation {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("turbine `{0}` has non-uniform (gapped, duplicated or unordered) timestamps")]
    NonUniformTimestamps(String),
    #[error("fleet turbines share no common time range")]
    NoCommonRange,
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("requested {requested} turbines but the fleet has {available}")]
    TooFewTurbines { requested: usize, available: usize },
    #[error("split would leave a partition with {len} steps, need at least {min}")]
    EmptyPartition { len: usize, min: usize },
    #[error("invalid series for `{id}`: {reason}")]
    InvalidSeries { id: String, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbineMeta {
    pub id: String,
    pub capacity_kw: f64,
    pub age: f64,
    pub utm_x: f64,
    pub utm_y: f64,
    /// Ground-truth behaviour archetype; only known for synthetic fleets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archetype: Option<String>,
}

/// One turbine's hourly multivariate series. Timestamps are implicit:
/// step `i` is at `start + i` hours.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineSeries {
    pub meta: TurbineMeta,
    pub start: NaiveDateTime,
    pub power: Vec<f64>,
    pub wind_speed: Vec<f64>,
    pub wind_dir: Vec<f64>,
    pub temperature: Vec<f64>,
}

impl TurbineSeries {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::hours(i as i64)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.len())
    }

    /// Checks the channel invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| DataError::InvalidSeries {
            id: self.meta.id.clone(),
            reason,
        };
        let n = self.power.len();
        if self.wind_speed.len() != n || self.wind_dir.len() != n || self.temperature.len() != n {
            return Err(bad("channels have different lengths".into()));
        }
        if !(self.meta.capacity_kw > 0.0) {
            return Err(bad(format!("capacity_kw {} is not positive", self.meta.capacity_kw)));
        }
        if !(self.meta.age >= 0.0) {
            return Err(bad(format!("age {} is negative", self.meta.age)));
        }
        let cap = self.meta.capacity_kw * POWER_SLACK;
        for i in 0..n {
            let (p, w, d, t) = (
                self.power[i],
                self.wind_speed[i],
                self.wind_dir[i],
                self.temperature[i],
            );
            if !(0.0..=cap).contains(&p) {
                return Err(bad(format!("power {p} at step {i} outside [0, {cap}]")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(bad(format!("wind speed {w} at step {i}")));
            }
            if !(0.0..360.0).contains(&d) {
                return Err(bad(format!("wind direction {d} at step {i}")));
            }
            if !t.is_finite() {
                return Err(bad(format!("temperature {t} at step {i}")));
            }
        }
        Ok(())
    }

    /// The steps `[from, to)` as a new series.
    pub fn slice(&self, from: usize, to: usize) -> TurbineSeries {
        TurbineSeries {
            meta: self.meta.clone(),
            start: self.timestamp(from),
            power: self.power[from..to].to_vec(),
            wind_speed: self.wind_speed[from..to].to_vec(),
            wind_dir: self.wind_dir[from..to].to_vec(),
            temperature: self.temperature[from..to].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    turbines: Vec<TurbineSeries>,
}

impl Fleet {
    /// Validates every turbine, checks id uniqueness, and trims all series to
    /// their common time range.
    pub fn new(mut turbines: Vec<TurbineSeries>) -> Result<Self> {
        if turbines.is_empty() {
            return Err(DataError::EmptyFleet);
        }
        let mut ids: Vec<&str> = turbines.iter().map(|t| t.meta.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::InvalidSeries {
                id: w[0].to_string(),
                reason: "duplicate turbine id".into(),
            });
        }
        for t in &turbines {
            t.validate()?;
        }
        let start = turbines.iter().map(|t| t.start).max().expect("non-empty");
        let end = turbines.iter().map(|t| t.end()).min().expect("non-empty");
        if end <= start {
            return Err(DataError::NoCommonRange);
        }
        for t in &mut turbines {
            if t.start != start || t.end() != end {
                let from = (start - t.start).num_hours() as usize;
                let to = (end - t.start).num_hours() as usize;
                *t = t.slice(from, to);
            }
        }
        Ok(Self { turbines })
    }

    pub fn turbines(&self) -> &[TurbineSeries] {
        &self.turbines
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.turbines[0].len()
    }

    pub fn metas(&self) -> Vec<TurbineMeta> {
        self.turbines.iter().map(|t| t.meta.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&TurbineSeries> {
        self.turbines.iter().find(|t| t.meta.id == id)
    }

    /// The fleet restricted to the given turbine indices (kept in fleet order).
    pub fn subset(&self, indices: &[usize]) -> Fleet {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        Fleet {
            turbines: idx.iter().map(|&i| self.turbines[i].clone()).collect(),
        }
    }
}

/// Chronological train/test partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Index of the first test step.
    pub boundary: usize,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, len: usize) -> Self {
        Self {
            train_fraction,
            boundary: (train_fraction * len as f64).floor() as usize,
        }
    }
}

/// Splits a series into a leading train part of `floor(fraction · len)` steps
/// and the trailing remainder. Either side shorter than `min_steps` is an error.
pub fn chronological_split(
    series: &TurbineSeries,
    train_fraction: f64,
    min_steps: usize,
) -> Result<(TurbineSeries, TurbineSeries)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidParams(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let split = SplitSpec::new(train_fraction, series.len());
    let (n_train, n_test) = (split.boundary, series.len() - split.boundary);
    let short = n_train.min(n_test);
    if short < min_steps.max(1) {
        return Err(DataError::EmptyPartition {
            len: short,
            min: min_steps.max(1),
        });
    }
    Ok((
        series.slice(0, split.boundary),
        series.slice(split.boundary, series.len()),
    ))
}

/// Picks `n` spatially close turbines by greedy set growth.
///
/// The seed turbine minimises the mean distance to its five nearest
/// neighbours; afterwards the remaining turbine closest to any selected one
/// is added until `n` are chosen. Ties go to the lower fleet index.
pub fn nearest_neighbour_subsample(fleet: &Fleet, n: usize) -> Result<Fleet> {
    let m = fleet.len();
    if n > m || n == 0 {
        return Err(DataError::TooFewTurbines {
            requested: n,
            available: m,
        });
    }
    if n == m {
        return Ok(fleet.clone());
    }
    let pos: Vec<(f64, f64)> = fleet
        .turbines()
        .iter()
        .map(|t| (t.meta.utm_x, t.meta.utm_y))
        .collect();
    let dist = |a: usize, b: usize| (pos[a].0 - pos[b].0).hypot(pos[a].1 - pos[b].1);

    let mut seed = 0;
    let mut best = f64::INFINITY;
    for i in 0..m {
        let mut d: Vec<f64> = (0..m).filter(|&j| j != i).map(|j| dist(i, j)).collect();
        d.sort_by(f64::total_cmp);
        let k = d.len().min(5);
        let score = if k == 0 {
            0.0
        } else {
            d[..k].iter().sum::<f64>() / k as f64
        };
        if score < best {
            best = score;
            seed = i;
        }
    }

    let mut chosen = vec![false; m];
    chosen[seed] = true;
    // Distance from every turbine to the selected set.
    let mut to_set: Vec<f64> = (0..m).map(|j| dist(seed, j)).collect();
    let mut selected = vec![seed];
    while selected.len() < n {
        let next = (0..m)
            .filter(|&j| !chosen[j])
            .min_by(|&a, &b| to_set[a].total_cmp(&to_set[b]).then(a.cmp(&b)))
            .expect("n < m guarantees a candidate");
        chosen[next] = true;
        selected.push(next);
        for j in 0..m {
            to_set[j] = to_set[j].min(dist(next, j));
        }
    }
    Ok(fleet.subset(&selected))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use chrono::NaiveDate;

    pub fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    pub fn meta(id: &str, x: f64, y: f64) -> TurbineMeta {
        TurbineMeta {
            id: id.into(),
            capacity_kw: 10.0,
            age: 3.0,
            utm_x: x,
            utm_y: y,
            archetype: None,
        }
    }

    pub fn series_with_power(id: &str, power: Vec<f64>) -> TurbineSeries {
        let n = power.len();
        TurbineSeries {
            meta: meta(id, 0.0, 0.0),
            start: t0(),
            power,
            wind_speed: vec![5.0; n],
            wind_dir: (0..n).map(|i| (i * 7 % 360) as f64).collect(),
            temperature: vec![10.0; n],
        }
    }
}
