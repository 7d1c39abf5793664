//! Federated K-means over logical clients.
//!
//! Rows of a feature matrix are split into disjoint client shards. Initial
//! centres come from Double Roulette Selection (or, for the baseline,
//! centralised k-means++); each communication round broadcasts the global
//! centres, runs one local Lloyd step per client, and aggregates the local
//! centroids weighted by their sample counts. Clients only ever reveal shard
//! sizes, distance totals, selected centre rows, local centroids and counts,
//! all of which are written to an [`AuditLog`].
//!
//! Nearest-centre ties go to the lowest centre index, and a global cluster
//! that receives no samples keeps its previous centre.

mod audit;
mod init;
mod lloyd;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{sq_dist, Matrix};
use crate::rng;

pub use audit::{AuditKind, AuditLog, AuditRecord};
pub use init::{drs_init, kmeanspp_init};
pub use lloyd::{centralized_lloyd, lloyd_until_converged};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("{clients} clients requested for {rows} rows")]
    TooManyClients { clients: usize, rows: usize },
    #[error("{k} centres requested for {rows} rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("invalid federated k-means config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

/// Rows held by one logical client. `row_indices` is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub row_indices: Vec<usize>,
}

/// Global centres, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    pub centres: Matrix,
}

impl CentroidSet {
    pub fn new(centres: Matrix) -> Self {
        Self { centres }
    }

    pub fn k(&self) -> usize {
        self.centres.rows()
    }

    pub fn dim(&self) -> usize {
        self.centres.cols()
    }

    /// Index of and squared distance to the nearest centre; ties go to the
    /// lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, centre) in self.centres.iter_rows().enumerate() {
            let d = sq_dist(x, centre);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    pub fn assign(&self, data: &Matrix) -> Vec<usize> {
        data.iter_rows().map(|r| self.nearest(r).0).collect()
    }

    /// Sum of squared distances of every row to its nearest centre.
    pub fn inertia(&self, data: &Matrix) -> f64 {
        data.iter_rows().map(|r| self.nearest(r).1).sum()
    }
}

/// One client's reply in a communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client_id: usize,
    /// `None` where no local sample was assigned to that centre.
    pub local_centroids: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedKMeansConfig {
    pub n_clients: usize,
    pub k_global: usize,
    pub c_rounds: usize,
    pub seed: u64,
}

impl FedKMeansConfig {
    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.n_clients == 0 || self.k_global == 0 || self.c_rounds == 0 {
            return Err(ClusterError::InvalidConfig(format!(
                "n_clients, k_global and c_rounds must be >= 1 (got {}, {}, {})",
                self.n_clients, self.k_global, self.c_rounds
            )));
        }
        if self.k_global > rows {
            return Err(ClusterError::KTooLarge {
                k: self.k_global,
                rows,
            });
        }
        if self.n_clients > rows {
            return Err(ClusterError::TooManyClients {
                clients: self.n_clients,
                rows,
            });
        }
        Ok(())
    }
}

/// How the initial global centres are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Double Roulette Selection across clients.
    #[default]
    Drs,
    /// Centralised k-means++ D² seeding (non-private baseline).
    KMeansPlusPlus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedKMeansResult {
    pub labels: Vec<usize>,
    pub centres: CentroidSet,
    pub inertia: f64,
    /// The centres before the first communication round.
    pub init: CentroidSet,
}

/// Randomly partitions `n_rows` rows into `n_clients` shards whose sizes
/// differ by at most one (larger shards first).
pub fn partition_clients<R: Rng + ?Sized>(
    n_rows: usize,
    n_clients: usize,
    rng: &mut R,
) -> Result<Vec<ClientShard>> {
    if n_clients == 0 {
        return Err(ClusterError::InvalidConfig("n_clients must be >= 1".into()));
    }
    if n_clients > n_rows {
        return Err(ClusterError::TooManyClients {
            clients: n_clients,
            rows: n_rows,
        });
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(rng);
    let base = n_rows / n_clients;
    let extra = n_rows % n_clients;
    let mut shards = Vec::with_capacity(n_clients);
    let mut at = 0;
    for client_id in 0..n_clients {
        let size = base + usize::from(client_id < extra);
        let mut row_indices = perm[at..at + size].to_vec();
        row_indices.sort_unstable();
        shards.push(ClientShard {
            client_id,
            row_indices,
        });
        at += size;
    }
    Ok(shards)
}

/// One local K-means iteration on a shard: nearest-centre assignment followed
/// by per-cluster local means.
pub fn local_lloyd_step(shard: &ClientShard, data: &Matrix, centres: &CentroidSet) -> LocalUpdate {
    let k = centres.k();
    let d = data.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for &i in &shard.row_indices {
        let x = data.row(i);
        let (c, _) = centres.nearest(x);
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(x) {
            *s += v;
        }
    }
    let local_centroids = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    LocalUpdate {
        client_id: shard.client_id,
        local_centroids,
        counts,
    }
}

/// Sample-weighted average of local centroids. Clusters nobody reported keep
/// their previous centre. Updates are summed in `client_id` order.
pub fn aggregate_centroids(updates: &[LocalUpdate], previous: &CentroidSet) -> Result<CentroidSet> {
    let (k, d) = (previous.k(), previous.dim());
    for u in updates {
        if u.counts.len() != k || u.local_centroids.len() != k {
            return Err(ClusterError::DimensionMismatch(format!(
                "client {} reported {} clusters, expected {k}",
                u.client_id,
                u.counts.len()
            )));
        }
        for c in u.local_centroids.iter().flatten() {
            if c.len() != d {
                return Err(ClusterError::DimensionMismatch(format!(
                    "client {} sent a {}-dimensional centroid, expected {d}",
                    u.client_id,
                    c.len()
                )));
            }
        }
    }
    let mut order: Vec<&LocalUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);

    let mut next = previous.centres.clone();
    for c in 0..k {
        let total: usize = order.iter().map(|u| u.counts[c]).sum();
        if total == 0 {
            continue;
        }
        let mut acc = vec![0.0; d];
        for u in &order {
            if let (Some(local), n) = (&u.local_centroids[c], u.counts[c]) {
                // Normalised weights make a single contributor exact.
                let w = n as f64 / total as f64;
                for (a, v) in acc.iter_mut().zip(local) {
                    *a += w * v;
                }
            }
        }
        next.row_mut(c).copy_from_slice(&acc);
    }
    Ok(CentroidSet::new(next))
}

/// Full federated K-means: partition, initialise, run `c_rounds` rounds of
/// local steps and aggregation, then assign every row to its nearest centre.
pub fn federated_kmeans(
    data: &Matrix,
    config: &FedKMeansConfig,
    init: InitStrategy,
    audit: &mut AuditLog,
) -> Result<FedKMeansResult> {
    config.validate(data.rows())?;
    let mut rng = rng::stream(config.seed, &[]);
    let shards = partition_clients(data.rows(), config.n_clients, &mut rng)?;
    let initial = match init {
        InitStrategy::Drs => drs_init(&shards, data, config.k_global, &mut rng, audit)?,
        InitStrategy::KMeansPlusPlus => kmeanspp_init(data, config.k_global, &mut rng)?,
    };
    let mut centres = initial.clone();
    for round in 1..=config.c_rounds {
        let updates: Vec<LocalUpdate> = shards
            .iter()
            .map(|s| local_lloyd_step(s, data, &centres))
            .collect();
        for u in &updates {
            for (c, (local, &n)) in u.local_centroids.iter().zip(&u.counts).enumerate() {
                audit.record(round, u.client_id, AuditKind::LocalCount, Some(c), &[n as f64]);
                if let Some(local) = local {
                    audit.record(round, u.client_id, AuditKind::LocalCentroid, Some(c), local);
                }
            }
        }
        centres = aggregate_centroids(&updates, &centres)?;
    }
    let labels = centres.assign(data);
    let inertia = centres.inertia(data);
    Ok(FedKMeansResult {
        labels,
        centres,
        inertia,
        init: initial,
    })
}

/// Relabels to dense ids `0..k` in ascending order of the original labels.
pub fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let dense = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect();
    (dense, distinct.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn partition_sizes() {
        let mut r = rng::stream(1, &[]);
        let one = partition_clients(10, 1, &mut r).unwrap();
        assert_eq!(one[0].row_indices, (0..10).collect::<Vec<_>>());
        let three = partition_clients(10, 3, &mut r).unwrap();
        let sizes: Vec<usize> = three.iter().map(|s| s.row_indices.len()).collect();
        assert_eq!(sizes, [4, 3, 3]);
        assert_eq!(
            partition_clients(2, 3, &mut r),
            Err(ClusterError::TooManyClients { clients: 3, rows: 2 })
        );
    }

    #[test]
    fn local_step_examples() {
        let data = col(&[0.0, 2.0, 1.0, 5.0]);
        let shard = ClientShard { client_id: 0, row_indices: vec![0, 1] };
        let u = local_lloyd_step(&shard, &data, &CentroidSet::new(col(&[1.0])));
        assert_eq!(u.local_centroids, vec![Some(vec![1.0])]);
        assert_eq!(u.counts, vec![2]);

        let shard = ClientShard { client_id: 0, row_indices: vec![2] };
        let u = local_lloyd_step(&shard, &data, &CentroidSet::new(col(&[0.0, 10.0])));
        assert_eq!(u.local_centroids, vec![Some(vec![1.0]), None]);
        assert_eq!(u.counts, vec![1, 0]);

        // 5 is equidistant from 0 and 10: lowest index wins.
        let shard = ClientShard { client_id: 0, row_indices: vec![3] };
        let u = local_lloyd_step(&shard, &data, &CentroidSet::new(col(&[0.0, 10.0])));
        assert_eq!(u.counts, vec![1, 0]);
    }

    fn update(id: usize, cents: Vec<Option<Vec<f64>>>, counts: Vec<usize>) -> LocalUpdate {
        LocalUpdate { client_id: id, local_centroids: cents, counts }
    }

    #[test]
    fn aggregate_examples() {
        let prev = CentroidSet::new(col(&[9.0, 7.0, 5.0]));
        let one = update(0, vec![Some(vec![1.0]), Some(vec![2.0]), None], vec![2, 1, 0]);
        let agg = aggregate_centroids(std::slice::from_ref(&one), &prev).unwrap();
        assert_eq!(agg.centres.as_slice(), &[1.0, 2.0, 5.0]);

        let a = update(0, vec![Some(vec![0.0]), None, None], vec![1, 0, 0]);
        let b = update(1, vec![Some(vec![4.0]), None, None], vec![3, 0, 0]);
        let agg = aggregate_centroids(&[b, a], &prev).unwrap();
        assert_eq!(agg.centres.as_slice(), &[3.0, 7.0, 5.0]);

        let bad = update(0, vec![Some(vec![1.0, 2.0]), None, None], vec![1, 0, 0]);
        assert!(matches!(aggregate_centroids(&[bad], &prev), Err(ClusterError::DimensionMismatch(_))));
        let bad = update(0, vec![None], vec![0]);
        assert!(aggregate_centroids(&[bad], &prev).is_err());
    }

    #[test]
    fn k_equals_rows_has_zero_inertia() {
        let data = Matrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 1.0], vec![-2.0, 4.0], vec![7.0, 7.0]]);
        let cfg = FedKMeansConfig { n_clients: 2, k_global: 4, c_rounds: 3, seed: 11 };
        let r = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let (_, k) = densify(&r.labels);
        assert_eq!(k, 4);
    }

    #[test]
    fn config_errors() {
        let data = col(&[0.0, 1.0]);
        let mut cfg = FedKMeansConfig { n_clients: 1, k_global: 3, c_rounds: 1, seed: 0 };
        assert!(matches!(
            federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()),
            Err(ClusterError::KTooLarge { .. })
        ));
        cfg.k_global = 1;
        cfg.c_rounds = 0;
        assert!(federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let data = Matrix::from_rows(&(0..40).map(|i| vec![(i * 37 % 11) as f64, (i % 7) as f64]).collect::<Vec<_>>());
        let cfg = FedKMeansConfig { n_clients: 4, k_global: 3, c_rounds: 5, seed: 3 };
        let a = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
        let b = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn densify_orders_by_label() {
        assert_eq!(densify(&[5, 2, 5, 9]), (vec![1, 0, 1, 2], 3));
    }

    proptest! {
        #[test]
        fn shards_partition_rows(n in 1usize..80, c in 1usize..10, seed in any::<u64>()) {
            prop_assume!(c <= n);
            let shards = partition_clients(n, c, &mut rng::stream(seed, &[])).unwrap();
            let mut all: Vec<usize> = shards.iter().flat_map(|s| s.row_indices.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = shards.iter().map(|s| s.row_indices.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(sizes.iter().all(|&s| s > 0));
        }
    }
}
