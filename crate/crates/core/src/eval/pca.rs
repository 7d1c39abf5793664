use nalgebra::{DMatrix, SymmetricEigen};

use super::EvalError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Rows projected onto the leading components, `N × dims`.
    pub projected: Matrix,
    /// Unit-length components as rows, `dims × d`.
    pub components: Matrix,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per retained component.
    pub explained_ratio: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Principal components of the population covariance. Each component is
/// signed so that its largest-magnitude loading is positive.
pub fn pca_project(data: &Matrix, dims: usize) -> Result<PcaResult, EvalError> {
    let (n, d) = (data.rows(), data.cols());
    if dims > d {
        return Err(EvalError::DimsTooLarge { dims, d });
    }
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    let mean: Vec<f64> = (0..d).map(|j| data.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in data.iter_rows() {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let mut components = Matrix::zeros(dims, d);
    for (c, &i) in order.iter().take(dims).enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components.row_mut(c)[j] = sign * v[j];
        }
    }
    let mut projected = Matrix::zeros(n, dims);
    for (i, r) in data.iter_rows().enumerate() {
        for c in 0..dims {
            projected.row_mut(i)[c] = components
                .row(c)
                .iter()
                .zip(r.iter().zip(&mean))
                .map(|(w, (x, m))| w * (x - m))
                .sum();
        }
    }
    let explained_ratio = eigenvalues[..dims]
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaResult {
        projected,
        components,
        eigenvalues,
        explained_ratio,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::sq_dist;
    use crate::rng;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, &[]);
        Matrix::from_rows(&(0..n).map(|_| (0..d).map(|j| r.random::<f64>() * (j + 1) as f64).collect::<Vec<_>>()).collect::<Vec<_>>())
    }

    #[test]
    fn line_has_one_component() {
        let data = Matrix::from_rows(&(0..10).map(|i| [i as f64, 2.0 * i as f64, -(i as f64)]).collect::<Vec<_>>());
        let p = pca_project(&data, 1).unwrap();
        assert!((p.explained_ratio[0] - 1.0).abs() < 1e-12);
        assert!(pca_project(&data, 4).is_err());
    }

    #[test]
    fn full_rank_projection_preserves_distances() {
        let data = random(30, 6, 1);
        let p = pca_project(&data, 6).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let a = sq_dist(data.row(i), data.row(j));
                let b = sq_dist(p.projected.row(i), p.projected.row(j));
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn components_orthonormal_and_ratios_bounded() {
        let p = pca_project(&random(50, 6, 2), 6).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let dot: f64 = p.components.row(a).iter().zip(p.components.row(b)).map(|(x, y)| x * y).sum();
                assert!((dot - f64::from(a == b)).abs() < 1e-9);
            }
            let row = p.components.row(a);
            let pivot = row.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
        assert!(p.explained_ratio.iter().sum::<f64>() <= 1.0 + 1e-9);
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruction_error_is_eigen_tail() {
        let data = random(80, 6, 3);
        let p = pca_project(&data, 3).unwrap();
        let n = data.rows() as f64;
        let mut err = 0.0;
        for i in 0..data.rows() {
            for j in 0..6 {
                let recon: f64 = p.mean[j] + (0..3).map(|c| p.projected.row(i)[c] * p.components.row(c)[j]).sum::<f64>();
                err += (data.row(i)[j] - recon).powi(2);
            }
        }
        let tail: f64 = p.eigenvalues[3..].iter().sum();
        assert!((err / n - tail).abs() < 1e-9);
    }
}
