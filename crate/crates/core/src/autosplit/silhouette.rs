use thiserror::Error;

use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum SilhouetteError {
    #[error("silhouette needs at least two distinct labels")]
    SingleCluster,
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
}

/// Mean silhouette coefficient under Euclidean distance. Samples in
/// singleton clusters contribute 0. Labels need not be dense.
pub fn silhouette(data: &Matrix, labels: &[usize]) -> Result<f64, SilhouetteError> {
    let n = data.rows();
    if labels.len() != n {
        return Err(SilhouetteError::LengthMismatch {
            labels: labels.len(),
            rows: n,
        });
    }
    let (dense, k) = crate::fedcluster::densify(labels);
    if k < 2 {
        return Err(SilhouetteError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &l in &dense {
        sizes[l] += 1;
    }
    // sums[i * k + c] = total distance from row i to members of cluster c.
    let mut sums = vec![0.0; n * k];
    for i in 0..n {
        let xi = data.row(i);
        for j in (i + 1)..n {
            let d = sq_dist(xi, data.row(j)).sqrt();
            sums[i * k + dense[j]] += d;
            sums[j * k + dense[i]] += d;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = dense[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[i * k + own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[i * k + c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
