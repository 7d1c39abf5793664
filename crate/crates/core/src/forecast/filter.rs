//! Exclusion of clients whose held-out target carries no usable signal.

use serde::{Deserialize, Serialize};

use super::ClientDataset;
use crate::features::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    AllZero,
    LowMax,
    LowStd,
}

impl ExclusionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AllZero => "all_zero",
            Self::LowMax => "low_max",
            Self::LowStd => "low_std",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    pub min_max: f64,
    pub min_std: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_max: 0.1,
            min_std: 0.05,
        }
    }
}

/// Reason to exclude a normalised target series, checked in the order all
/// zero, low maximum, low standard deviation. An empty series counts as all
/// zero.
pub fn exclusion_reason(target: &[f64], th: &FilterThresholds) -> Option<ExclusionReason> {
    if target.iter().all(|&v| v == 0.0) {
        return Some(ExclusionReason::AllZero);
    }
    let max = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max < th.min_max {
        return Some(ExclusionReason::LowMax);
    }
    if mean_std(target).1 < th.min_std {
        return Some(ExclusionReason::LowStd);
    }
    None
}

/// Splits clients into those kept and those excluded, judged on each
/// client's validation target series.
pub fn filter_uninformative_clients(
    clients: Vec<ClientDataset>,
    th: &FilterThresholds,
) -> (Vec<ClientDataset>, Vec<(String, ExclusionReason)>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for c in clients {
        match exclusion_reason(&c.validation.target_series(), th) {
            Some(r) => excluded.push((c.id.clone(), r)),
            None => kept.push(c),
        }
    }
    (kept, excluded)
}
