//! Regression and clustering scores, baseline groupings, PCA and report
//! emission.

mod ari;
mod grouping;
mod metrics;
mod pca;
mod report;

use thiserror::Error;

use crate::fedcluster::ClusterError;

pub use ari::adjusted_rand_index;
pub use grouping::{
    flat_fed_kmeans_grouping, geo_grouping, geo_sweep, kmeans_restarts, standardised_coordinates, GroupingResult,
    GEO_RESTARTS,
};
pub use metrics::{regression_metrics, MetricsReport, R2_SENTINEL};
pub use pca::{pca_project, PcaResult};
pub use report::{
    comparison_csv, emit_report, forecast_csv, history_csv, pca_csv, per_client_csv, profile_csv, trajectory_svg,
    ComparisonRow, PerClientRow, Report, COMPARISON_HEADER, HISTORY_HEADER,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("{dims} components requested from {d}-dimensional data")]
    DimsTooLarge { dims: usize, d: usize },
    #[error("invalid group count {0}")]
    InvalidGroupCount(usize),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
