use std::collections::{BTreeMap, HashSet};

use fedwind_core::fedcluster::{
    aggregate_centroids, centralized_lloyd, drs_init, federated_kmeans, kmeanspp_init, local_lloyd_step,
    partition_clients, AuditKind, AuditLog, CentroidSet, ClientShard, FedKMeansConfig, InitStrategy,
};
use fedwind_core::matrix::{sq_dist, Matrix};
use fedwind_core::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, &[0xDA7A]);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    Matrix::from_rows(&rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_client_matches_centralized_lloyd(
        n in 5usize..200,
        k in 1usize..=5,
        c in 1usize..6,
        seed in any::<u64>(),
        drs in any::<bool>(),
    ) {
        let data = random_matrix(n, 6, seed);
        let cfg = FedKMeansConfig { n_clients: 1, k_global: k, c_rounds: c, seed };
        let init = if drs { InitStrategy::Drs } else { InitStrategy::KMeansPlusPlus };
        let fed = federated_kmeans(&data, &cfg, init, &mut AuditLog::disabled()).unwrap();
        let (labels, centres) = centralized_lloyd(&data, &fed.init, c);
        prop_assert_eq!(&labels, &fed.labels);
        prop_assert_eq!(centres.centres.as_slice(), fed.centres.centres.as_slice());
    }

    #[test]
    fn aggregation_equals_pooled_means(
        n in 1usize..120,
        d in 1usize..5,
        k in 1usize..6,
        clients in 1usize..8,
        seed in any::<u64>(),
    ) {
        let clients = clients.min(n);
        let data = random_matrix(n, d, seed);
        let mut r = rng::stream(seed, &[7]);
        let shards = partition_clients(n, clients, &mut r).unwrap();
        let centres = CentroidSet::new(random_matrix(k, d, seed ^ 0x55));
        let updates: Vec<_> = shards.iter().map(|s| local_lloyd_step(s, &data, &centres)).collect();
        let agg = aggregate_centroids(&updates, &centres).unwrap();

        let labels = centres.assign(&data);
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            for j in 0..d {
                let expected = if members.is_empty() {
                    centres.centres.row(c)[j]
                } else {
                    members.iter().map(|&i| data.row(i)[j]).sum::<f64>() / members.len() as f64
                };
                prop_assert!((agg.centres.row(c)[j] - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn aggregation_ignores_update_order(n in 4usize..80, k in 1usize..5, seed in any::<u64>()) {
        let data = random_matrix(n, 3, seed);
        let mut r = rng::stream(seed, &[8]);
        let shards = partition_clients(n, 4.min(n), &mut r).unwrap();
        let centres = CentroidSet::new(random_matrix(k, 3, seed ^ 9));
        let mut updates: Vec<_> = shards.iter().map(|s| local_lloyd_step(s, &data, &centres)).collect();
        let a = aggregate_centroids(&updates, &centres).unwrap();
        updates.reverse();
        let b = aggregate_centroids(&updates, &centres).unwrap();
        prop_assert_eq!(a.centres.as_slice(), b.centres.as_slice());
    }

    #[test]
    fn local_counts_cover_shard(n in 1usize..60, k in 1usize..5, seed in any::<u64>()) {
        let data = random_matrix(n, 2, seed);
        let shard = ClientShard { client_id: 0, row_indices: (0..n).collect() };
        let centres = CentroidSet::new(random_matrix(k, 2, seed ^ 3));
        let u = local_lloyd_step(&shard, &data, &centres);
        prop_assert_eq!(u.counts.iter().sum::<usize>(), n);
        for (c, &count) in u.counts.iter().enumerate() {
            prop_assert_eq!(u.local_centroids[c].is_none(), count == 0);
        }
    }
}

#[test]
fn two_blobs_recovered_up_to_permutation() {
    let mut r = rng::stream(11, &[]);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let truth: Vec<usize> = (0..80).map(|i| i % 2).collect();
    let rows: Vec<Vec<f64>> = truth
        .iter()
        .map(|&t| (0..6).map(|_| 10.0 * t as f64 + noise.sample(&mut r)).collect())
        .collect();
    let data = Matrix::from_rows(&rows);
    for seed in 0..5 {
        let cfg = FedKMeansConfig { n_clients: 4, k_global: 2, c_rounds: 5, seed };
        let fed = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
        let direct = fed.labels == truth;
        let flipped = fed.labels.iter().zip(&truth).all(|(a, b)| *a != *b);
        assert!(direct || flipped, "seed {seed}");
    }
}

#[test]
fn k_equal_to_rows_has_zero_inertia() {
    let data = random_matrix(12, 3, 5);
    let cfg = FedKMeansConfig { n_clients: 3, k_global: 12, c_rounds: 2, seed: 1 };
    let fed = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
    assert_eq!(fed.inertia, 0.0);
}

#[test]
fn fixed_seed_is_deterministic() {
    let data = random_matrix(90, 6, 6);
    let cfg = FedKMeansConfig { n_clients: 5, k_global: 4, c_rounds: 3, seed: 99 };
    let a = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
    let b = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut AuditLog::disabled()).unwrap();
    assert_eq!(a, b);
}

fn row_key(r: &[f64]) -> Vec<u64> {
    r.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn audit_log_exposes_only_aggregates_and_selected_rows() {
    for seed in 0..10 {
        let data = random_matrix(60, 4, seed);
        let cfg = FedKMeansConfig { n_clients: 4, k_global: 5, c_rounds: 3, seed };
        let mut audit = AuditLog::enabled();
        let fed = federated_kmeans(&data, &cfg, InitStrategy::Drs, &mut audit).unwrap();
        let raw: HashSet<Vec<u64>> = data.iter_rows().map(row_key).collect();
        let init: HashSet<Vec<u64>> = fed.init.centres.iter_rows().map(row_key).collect();

        let mut leaked = HashSet::new();
        let mut counts = BTreeMap::new();
        for rec in audit.records() {
            match rec.kind {
                AuditKind::ShardSize | AuditKind::DistanceTotal | AuditKind::UnchosenCount => {
                    assert_eq!(rec.round, 0);
                    assert_eq!(rec.payload.len(), 1);
                }
                AuditKind::SelectedCentre => {
                    assert_eq!(rec.round, 0);
                    leaked.insert(row_key(&rec.payload));
                }
                AuditKind::LocalCount => {
                    assert!(rec.round >= 1);
                    counts.insert((rec.round, rec.client_id, rec.cluster), rec.payload[0]);
                }
                AuditKind::LocalCentroid => assert!(rec.round >= 1),
            }
        }
        assert_eq!(leaked, init, "seed {seed}");
        assert!(leaked.iter().all(|r| raw.contains(r)));
        // A local centroid can only coincide with a raw row when it is the
        // mean of that single row.
        for rec in audit.records().iter().filter(|r| r.kind == AuditKind::LocalCentroid) {
            if raw.contains(&row_key(&rec.payload)) {
                assert_eq!(counts[&(rec.round, rec.client_id, rec.cluster)], 1.0);
            }
        }
    }
}

/// Probability of every unordered set of `k` rows under sequential D²
/// sampling with a uniform first draw.
fn d2_set_probabilities(points: &[f64], k: usize) -> BTreeMap<Vec<usize>, f64> {
    fn recurse(points: &[f64], k: usize, chosen: &mut Vec<usize>, p: f64, out: &mut BTreeMap<Vec<usize>, f64>) {
        if chosen.len() == k {
            let mut key = chosen.clone();
            key.sort_unstable();
            *out.entry(key).or_default() += p;
            return;
        }
        let d2: Vec<f64> = points
            .iter()
            .map(|x| chosen.iter().map(|&c| (x - points[c]).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let weights: Vec<f64> = if chosen.is_empty() { vec![1.0; points.len()] } else { d2 };
        let total: f64 = weights.iter().sum();
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                chosen.push(i);
                recurse(points, k, chosen, p * w / total, out);
                chosen.pop();
            }
        }
    }
    let mut out = BTreeMap::new();
    recurse(points, k, &mut Vec::new(), 1.0, &mut out);
    out
}

fn empirical<F: Fn(u64) -> CentroidSet>(points: &[f64], trials: u64, draw: F) -> BTreeMap<Vec<usize>, f64> {
    let mut freq = BTreeMap::new();
    for t in 0..trials {
        let centres = draw(t);
        let mut key: Vec<usize> = centres
            .centres
            .iter_rows()
            .map(|c| points.iter().position(|p| *p == c[0]).unwrap())
            .collect();
        key.sort_unstable();
        *freq.entry(key).or_insert(0.0) += 1.0 / trials as f64;
    }
    freq
}

fn total_variation(a: &BTreeMap<Vec<usize>, f64>, b: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let keys: HashSet<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[test]
fn single_client_drs_matches_d2_distribution() {
    let points = [0.0, 1.0, 2.5, 6.0, 10.0];
    let data = Matrix::from_rows(&points.iter().map(|&x| [x]).collect::<Vec<_>>());
    let oracle = d2_set_probabilities(&points, 3);
    assert!((oracle.values().sum::<f64>() - 1.0).abs() < 1e-12);
    let shard = vec![ClientShard { client_id: 0, row_indices: (0..5).collect() }];

    let drs = empirical(&points, 10_000, |t| {
        drs_init(&shard, &data, 3, &mut rng::stream(t, &[0xD5]), &mut AuditLog::disabled()).unwrap()
    });
    let kpp = empirical(&points, 10_000, |t| kmeanspp_init(&data, 3, &mut rng::stream(t, &[0xCC])).unwrap());
    assert!(total_variation(&drs, &oracle) <= 0.02);
    assert!(total_variation(&kpp, &oracle) <= 0.02);
}

#[test]
fn multi_client_drs_first_centre_is_uniform() {
    // Unequal shards: a size-weighted client draw keeps the first pick uniform.
    let data = Matrix::from_rows(&(0..7).map(|i| [i as f64]).collect::<Vec<_>>());
    let shards = vec![
        ClientShard { client_id: 0, row_indices: vec![0, 1, 2, 3, 4] },
        ClientShard { client_id: 1, row_indices: vec![5, 6] },
    ];
    let trials = 14_000;
    let mut hits = [0usize; 7];
    for t in 0..trials {
        let c = drs_init(&shards, &data, 1, &mut rng::stream(t, &[1]), &mut AuditLog::disabled()).unwrap();
        hits[c.centres.row(0)[0] as usize] += 1;
    }
    for h in hits {
        assert!((h as f64 / trials as f64 - 1.0 / 7.0).abs() < 0.015);
    }
}

#[test]
fn drs_centres_are_distinct_rows() {
    for seed in 0..20 {
        let data = random_matrix(30, 3, seed);
        let mut r = rng::stream(seed, &[]);
        let shards = partition_clients(30, 3, &mut r).unwrap();
        let c = drs_init(&shards, &data, 8, &mut r, &mut AuditLog::disabled()).unwrap();
        for i in 0..8 {
            assert!(data.iter_rows().any(|row| row == c.centres.row(i)));
            for j in 0..i {
                assert!(sq_dist(c.centres.row(i), c.centres.row(j)) > 0.0);
            }
        }
    }
}
