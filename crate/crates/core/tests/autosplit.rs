use std::collections::BTreeSet;

use fedwind_core::autosplit::{
    auto_split, grid_search, leaf_labels, silhouette, AutoSplitConfig, ClusterTree, ParamGrid, SplitThresholds,
};
use fedwind_core::data::{generate_synthetic_fleet, FleetSpec};
use fedwind_core::eval::adjusted_rand_index;
use fedwind_core::features::{fingerprint, standardise, StandardiseOptions};
use fedwind_core::fedcluster::InitStrategy;
use fedwind_core::matrix::Matrix;
use fedwind_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn small_grid() -> ParamGrid {
    ParamGrid {
        n_range: (1, 3),
        k_range: (2, 4),
        c_range: (1, 3),
    }
}

fn clustered(n: usize, centres: usize, spread: f64, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, &[0xB10B]);
    let mids: Vec<Vec<f64>> = (0..centres).map(|_| (0..3).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| mids[i % centres].iter().map(|m| m + spread * r.random_range(-1.0..1.0)).collect())
        .collect();
    Matrix::from_rows(&rows)
}

fn assert_partitions(tree: &ClusterTree) {
    for node in &tree.nodes {
        if node.is_leaf {
            assert!(node.children.is_empty());
            continue;
        }
        let mut union = BTreeSet::new();
        let mut total = 0;
        for &c in &node.children {
            let child = tree.node(c);
            assert_eq!(child.parent, Some(node.node_id));
            assert!(child.size < node.size);
            total += child.size;
            union.extend(child.row_indices.iter().copied());
        }
        assert_eq!(total, node.size, "children overlap");
        assert_eq!(union, node.row_indices.iter().copied().collect::<BTreeSet<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_partitions_rows_and_terminates(
        n in 2usize..60,
        centres in 1usize..5,
        spread in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let data = clustered(n, centres, spread, seed);
        let cfg = AutoSplitConfig { grid: small_grid(), seed, ..Default::default() };
        let tree = auto_split(&data, &cfg).unwrap();
        tree.check().unwrap();
        assert_partitions(&tree);
        prop_assert!(tree.nodes.iter().filter(|n| n.searched).count() <= 2 * n);

        let ll = leaf_labels(&tree);
        prop_assert_eq!(ll.labels.len(), n);
        let mut seen = vec![0usize; n];
        for leaf in tree.leaves() {
            for &r in &leaf.row_indices {
                seen[r] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let tau_min = cfg.thresholds.tau_min * n as f64;
        for leaf in tree.leaves().filter(|l| l.is_outlier_leaf) {
            prop_assert!(leaf.size as f64 <= tau_min);
        }
    }

    #[test]
    fn raising_tau_sil_never_adds_scored_splits(
        n in 10usize..50,
        seed in any::<u64>(),
        low in 0.0f64..0.6,
        bump in 0.0f64..0.4,
    ) {
        let data = clustered(n, 3, 1.5, seed);
        let run = |tau_sil: f64| {
            let thresholds = SplitThresholds { tau_sil, ..Default::default() };
            let tree = auto_split(&data, &AutoSplitConfig { grid: small_grid(), thresholds, seed, ..Default::default() }).unwrap();
            tree.nodes.iter().filter(|n| !n.is_leaf && !n.forced).count()
        };
        prop_assert!(run(low + bump) <= run(low));
    }

    #[test]
    fn grid_search_is_deterministic(n in 4usize..40, seed in any::<u64>()) {
        let data = clustered(n, 2, 0.5, seed);
        let a = grid_search(&data, &small_grid(), InitStrategy::Drs, seed).unwrap();
        let b = grid_search(&data, &small_grid(), InitStrategy::Drs, seed).unwrap();
        prop_assert_eq!(&a, &b);
        if let Some(best) = a {
            prop_assert_eq!(silhouette(&data, &best.labels).unwrap(), best.score);
        }
    }
}

#[test]
fn tree_json_survives_round_trip_and_rejects_tampering() {
    let data = clustered(40, 3, 0.3, 3);
    let tree = auto_split(&data, &AutoSplitConfig { grid: small_grid(), ..Default::default() }).unwrap();
    let back = ClusterTree::from_json(&tree.to_json()).unwrap();
    assert_eq!(back, tree);

    let mut broken = tree.clone();
    if let Some(leaf) = broken.nodes.iter_mut().find(|n| n.is_leaf) {
        leaf.row_indices.push(10_000);
        leaf.size += 1;
    }
    assert!(ClusterTree::from_json(&broken.to_json()).is_err());
}

#[test]
fn repeated_runs_agree() {
    let data = clustered(60, 4, 0.4, 8);
    let cfg = AutoSplitConfig { grid: small_grid(), seed: 5, ..Default::default() };
    assert_eq!(auto_split(&data, &cfg).unwrap(), auto_split(&data, &cfg).unwrap());
}

#[test]
fn separable_archetypes_are_recovered() {
    let fleet = generate_synthetic_fleet(&FleetSpec::three_archetypes(120, 8760, 0)).unwrap();
    let fps: Vec<_> = fleet.turbines().iter().map(|t| fingerprint(t).unwrap()).collect();
    let fm = standardise(&fps, StandardiseOptions::default()).unwrap();
    let truth: Vec<String> = fleet.turbines().iter().map(|t| t.meta.archetype.clone().unwrap()).collect();
    let tree = auto_split(&fm.data, &AutoSplitConfig::default()).unwrap();
    let ari = adjusted_rand_index(&leaf_labels(&tree).labels, &truth).unwrap();
    assert!(ari >= 0.9, "ari {ari}");
}
