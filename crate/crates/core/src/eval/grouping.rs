//! Baseline partitions of the fleet: geographic K-means and flat federated
//! K-means without recursion.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autosplit::silhouette;
use crate::data::TurbineMeta;
use crate::fedcluster::{
    densify, federated_kmeans, kmeanspp_init, lloyd_until_converged, AuditLog, FedKMeansConfig, InitStrategy,
};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingResult {
    pub method: String,
    /// Dense labels in `0..k`.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Silhouette in the space the grouping was computed in; `None` for a
    /// single group.
    pub quality: Option<f64>,
}

impl GroupingResult {
    pub fn from_labels(method: &str, labels: &[usize], space: &Matrix) -> Self {
        let (labels, k) = densify(labels);
        let quality = silhouette(space, &labels).ok();
        Self {
            method: method.into(),
            labels,
            k,
            quality,
        }
    }

    pub fn single(method: &str, n: usize) -> Self {
        Self {
            method: method.into(),
            labels: vec![0; n],
            k: 1,
            quality: None,
        }
    }

    /// Row indices of each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Standardised planar coordinates; zero-variance axes map to zero.
pub fn standardised_coordinates(metas: &[TurbineMeta]) -> Matrix {
    let n = metas.len() as f64;
    let mut cols = [
        metas.iter().map(|m| m.utm_x).collect::<Vec<_>>(),
        metas.iter().map(|m| m.utm_y).collect::<Vec<_>>(),
    ];
    for c in &mut cols {
        let mean = c.iter().sum::<f64>() / n;
        let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        for v in c.iter_mut() {
            *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
        }
    }
    Matrix::from_rows(&(0..metas.len()).map(|i| [cols[0][i], cols[1][i]]).collect::<Vec<_>>())
}

fn distinct_rows(m: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = m.iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

pub const GEO_RESTARTS: usize = 10;

/// Best-of-restarts centralised k-means++ and Lloyd. Runs that keep all `k`
/// clusters non-empty are preferred, then lower inertia, then earlier runs.
pub fn kmeans_restarts(data: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    let mut best: Option<(bool, f64, Vec<usize>)> = None;
    for r in 0..restarts.max(1) {
        let mut stream = rng::stream(seed, &[k as u64, r as u64]);
        let init = kmeanspp_init(data, k, &mut stream)?;
        let (labels, centres, _) = lloyd_until_converged(data, &init, 300);
        let full = densify(&labels).1 == k;
        let inertia = centres.inertia(data);
        let better = match &best {
            None => true,
            Some((bf, bi, _)) => (full && !bf) || (full == *bf && inertia < *bi),
        };
        if better {
            best = Some((full, inertia, labels));
        }
    }
    Ok(best.expect("at least one restart").2)
}

/// Geographic grouping on standardised coordinates. With `k = None` the
/// group count maximising silhouette over `2..=10` is chosen (ties keep the
/// smaller count). Fewer than two distinct locations yield a single group.
pub fn geo_grouping(metas: &[TurbineMeta], k: Option<usize>, seed: u64) -> Result<GroupingResult, EvalError> {
    if metas.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let coords = standardised_coordinates(metas);
    let distinct = distinct_rows(&coords);
    let method = if k.is_some() { "geo_fixed" } else { "geo_auto" };
    if distinct < 2 {
        return Ok(GroupingResult::single(method, metas.len()));
    }
    match k {
        Some(k) => {
            if k == 0 {
                return Err(EvalError::InvalidGroupCount(k));
            }
            let k = k.min(distinct);
            if k == 1 {
                return Ok(GroupingResult::single(method, metas.len()));
            }
            let labels = kmeans_restarts(&coords, k, GEO_RESTARTS, seed)?;
            Ok(GroupingResult::from_labels(method, &labels, &coords))
        }
        None => {
            let sweep = geo_sweep(&coords, seed)?;
            let (_, labels) = sweep
                .into_iter()
                .filter_map(|(labels, s)| s.map(|s| (s, labels)))
                .fold(None::<(f64, Vec<usize>)>, |acc, (s, l)| match acc {
                    Some((bs, _)) if s <= bs => acc,
                    _ => Some((s, l)),
                })
                .expect("k = 2 always yields two groups on two distinct points");
            Ok(GroupingResult::from_labels(method, &labels, &coords))
        }
    }
}

/// Labels and silhouette for each candidate group count `2..=10` that fits
/// the number of distinct locations.
pub fn geo_sweep(coords: &Matrix, seed: u64) -> Result<Vec<(Vec<usize>, Option<f64>)>, EvalError> {
    let distinct = distinct_rows(coords);
    (2..=10usize.min(distinct))
        .map(|k| {
            let labels = kmeans_restarts(coords, k, GEO_RESTARTS, seed)?;
            let s = silhouette(coords, &labels).ok();
            Ok((labels, s))
        })
        .collect()
}

/// One-shot federated K-means with DRS seeding, no recursion.
pub fn flat_fed_kmeans_grouping(data: &Matrix, config: &FedKMeansConfig) -> Result<GroupingResult, EvalError> {
    if config.k_global == 1 {
        return Ok(GroupingResult::single("flat_fed_k", data.rows()));
    }
    let result = federated_kmeans(data, config, InitStrategy::Drs, &mut AuditLog::disabled())?;
    Ok(GroupingResult::from_labels("flat_fed_k", &result.labels, data))
}
