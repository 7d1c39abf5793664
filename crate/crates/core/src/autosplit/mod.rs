//! Recursive silhouette-driven splitting of behaviour space.
//!
//! Auto-split grows a cluster tree breadth-first. Each sufficiently large
//! node runs federated K-means over a grid of `(n_clients, k_global,
//! c_rounds)` configurations and keeps the partition with the best
//! silhouette. The node is split when that score reaches `tau_sil`, or
//! unconditionally (a forced split) when it holds more than `tau_large` of
//! all samples. Nodes and children holding at most `tau_min` of all samples
//! become outlier leaves without further search.
//!
//! Each node draws its randomness from the global seed and its path of child
//! positions from the root, so a subtree's shape does not depend on what
//! happens elsewhere in the tree.

mod silhouette;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fedcluster::{federated_kmeans, AuditLog, ClusterError, FedKMeansConfig, InitStrategy};
use crate::matrix::Matrix;
use crate::rng;

pub use silhouette::{silhouette, SilhouetteError};

#[derive(Debug, Error, PartialEq)]
pub enum AutoSplitError {
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),
    #[error("feature matrix has no rows")]
    Empty,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitThresholds {
    pub tau_sil: f64,
    pub tau_min: f64,
    pub tau_large: f64,
}

impl Default for SplitThresholds {
    fn default() -> Self {
        Self {
            tau_sil: 0.45,
            tau_min: 0.3,
            tau_large: 0.7,
        }
    }
}

impl SplitThresholds {
    pub fn validate(&self) -> Result<(), AutoSplitError> {
        let ok = 0.0 < self.tau_min
            && self.tau_min < self.tau_large
            && self.tau_large < 1.0
            && (-1.0..=1.0).contains(&self.tau_sil);
        if ok {
            Ok(())
        } else {
            Err(AutoSplitError::InvalidThresholds(format!(
                "need 0 < tau_min < tau_large < 1 and -1 <= tau_sil <= 1, got {self:?}"
            )))
        }
    }
}

/// Inclusive search ranges for clients, global clusters and rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub n_range: (usize, usize),
    pub k_range: (usize, usize),
    pub c_range: (usize, usize),
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            n_range: (3, 9),
            k_range: (3, 10),
            c_range: (3, 10),
        }
    }
}

impl ParamGrid {
    pub fn validate(&self) -> Result<(), AutoSplitError> {
        for (name, (lo, hi)) in [("n", self.n_range), ("k", self.k_range), ("c", self.c_range)] {
            if lo < 1 || lo > hi {
                return Err(AutoSplitError::InvalidGrid(format!("{name} range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Distinct configurations for a node of `size` rows, with `n` and `k`
    /// capped at `size`, in lexicographic order.
    pub fn configs(&self, size: usize) -> Vec<(usize, usize, usize)> {
        let mut set = BTreeSet::new();
        for n in self.n_range.0..=self.n_range.1 {
            for k in self.k_range.0..=self.k_range.1 {
                for c in self.c_range.0..=self.c_range.1 {
                    set.insert((n.min(size), k.min(size), c));
                }
            }
        }
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoSplitConfig {
    pub grid: ParamGrid,
    pub thresholds: SplitThresholds,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for AutoSplitConfig {
    fn default() -> Self {
        Self {
            grid: ParamGrid::default(),
            thresholds: SplitThresholds::default(),
            init: InitStrategy::Drs,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitParams {
    pub n_clients: usize,
    pub k_global: usize,
    pub c_rounds: usize,
}

/// Best partition found by [`grid_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub score: f64,
    pub labels: Vec<usize>,
    pub params: SplitParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub node_id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub size: usize,
    pub row_indices: Vec<usize>,
    pub children: Vec<usize>,
    pub is_leaf: bool,
    pub is_outlier_leaf: bool,
    /// Whether the grid search ran on this node.
    pub searched: bool,
    pub best_silhouette: Option<f64>,
    pub chosen_params: Option<SplitParams>,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub nodes: Vec<ClusterNode>,
    pub root_id: usize,
    pub total_n: usize,
}

impl ClusterTree {
    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    /// Leaves in node-id (breadth-first discovery) order.
    pub fn leaves(&self) -> impl Iterator<Item = &ClusterNode> {
        self.nodes.iter().filter(|n| n.is_leaf)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, AutoSplitError> {
        let tree: Self = serde_json::from_str(s).map_err(|e| AutoSplitError::MalformedTree(e.to_string()))?;
        tree.check()?;
        Ok(tree)
    }

    /// Verifies that children partition their parent and leaves partition
    /// the root.
    pub fn check(&self) -> Result<(), AutoSplitError> {
        let bad = |m: String| Err(AutoSplitError::MalformedTree(m));
        if self.root_id >= self.nodes.len() {
            return bad("root id out of range".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return bad(format!("node at position {i} has id {}", node.node_id));
            }
            if node.is_leaf != node.children.is_empty() {
                return bad(format!("node {i}: leaf flag disagrees with children"));
            }
            if node.size != node.row_indices.len() {
                return bad(format!("node {i}: size disagrees with rows"));
            }
            if !node.children.is_empty() {
                let mut union: Vec<usize> = Vec::new();
                for &c in &node.children {
                    let Some(child) = self.nodes.get(c) else {
                        return bad(format!("node {i}: child {c} missing"));
                    };
                    union.extend(&child.row_indices);
                }
                union.sort_unstable();
                let mut own = node.row_indices.clone();
                own.sort_unstable();
                if union != own {
                    return bad(format!("node {i}: children do not partition it"));
                }
            }
        }
        let mut rows: Vec<usize> = self.leaves().flat_map(|l| l.row_indices.iter().copied()).collect();
        rows.sort_unstable();
        if rows != (0..self.total_n).collect::<Vec<_>>() {
            return bad("leaves do not partition the rows".into());
        }
        Ok(())
    }
}

/// Runs federated K-means for every grid configuration on `data` and keeps
/// the one with the highest silhouette. Ties keep the lexicographically
/// smallest `(n, k, c)`. Configurations that produce a single label are
/// skipped; `None` means no configuration produced two labels.
pub fn grid_search(
    data: &Matrix,
    grid: &ParamGrid,
    init: InitStrategy,
    seed: u64,
) -> Result<Option<GridResult>, AutoSplitError> {
    if data.rows() < 2 {
        return Ok(None);
    }
    let mut best: Option<GridResult> = None;
    for (n, k, c) in grid.configs(data.rows()) {
        let config = FedKMeansConfig {
            n_clients: n,
            k_global: k,
            c_rounds: c,
            seed: rng::derive_seed(seed, &[n as u64, k as u64, c as u64]),
        };
        let result = federated_kmeans(data, &config, init, &mut AuditLog::disabled())?;
        let Ok(score) = silhouette(data, &result.labels) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(GridResult {
                score,
                labels: result.labels,
                params: SplitParams {
                    n_clients: n,
                    k_global: k,
                    c_rounds: c,
                },
            });
        }
    }
    Ok(best)
}

fn path_seed(seed: u64, path: &[usize]) -> u64 {
    let tags: Vec<u64> = std::iter::once(0xA5).chain(path.iter().map(|&p| p as u64)).collect();
    rng::derive_seed(seed, &tags)
}

/// Builds the cluster tree for all rows of `data`.
pub fn auto_split(data: &Matrix, config: &AutoSplitConfig) -> Result<ClusterTree, AutoSplitError> {
    config.thresholds.validate()?;
    config.grid.validate()?;
    let total = data.rows();
    if total == 0 {
        return Err(AutoSplitError::Empty);
    }
    let ratio = |size: usize| size as f64 / total as f64;
    let th = config.thresholds;

    let leaf = |node_id, parent, depth, rows: Vec<usize>| ClusterNode {
        node_id,
        parent,
        depth,
        size: rows.len(),
        row_indices: rows,
        children: Vec::new(),
        is_leaf: true,
        is_outlier_leaf: false,
        searched: false,
        best_silhouette: None,
        chosen_params: None,
        forced: false,
    };

    let mut nodes = vec![leaf(0, None, 0, (0..total).collect())];
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    let mut queue = VecDeque::from([0usize]);

    while let Some(id) = queue.pop_front() {
        if ratio(nodes[id].size) <= th.tau_min {
            nodes[id].is_outlier_leaf = true;
            continue;
        }
        let sub = data.select_rows(&nodes[id].row_indices);
        let found = grid_search(&sub, &config.grid, config.init, path_seed(config.seed, &paths[id]))?;
        let node = &mut nodes[id];
        node.searched = true;
        node.best_silhouette = found.as_ref().map(|g| g.score);
        let Some(found) = found else { continue };
        let by_score = found.score >= th.tau_sil;
        if !(by_score || ratio(node.size) > th.tau_large) {
            continue;
        }
        node.forced = !by_score;
        node.chosen_params = Some(found.params);
        node.is_leaf = false;

        let k = found.labels.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for (&row, &l) in node.row_indices.iter().zip(&found.labels) {
            groups[l].push(row);
        }
        let depth = node.depth + 1;
        for (pos, rows) in groups.into_iter().filter(|g| !g.is_empty()).enumerate() {
            let child_id = nodes.len();
            let mut child = leaf(child_id, Some(id), depth, rows);
            if ratio(child.size) > th.tau_min {
                queue.push_back(child_id);
            } else {
                child.is_outlier_leaf = true;
            }
            nodes[id].children.push(child_id);
            let mut path = paths[id].clone();
            path.push(pos);
            paths.push(path);
            nodes.push(child);
        }
    }
    Ok(ClusterTree {
        nodes,
        root_id: 0,
        total_n: total,
    })
}

/// Per-row leaf assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafLabels {
    /// Dense leaf ids in breadth-first discovery order.
    pub labels: Vec<usize>,
    /// Whether each row's leaf is an outlier leaf.
    pub outlier: Vec<bool>,
    /// Node id of each dense leaf.
    pub leaf_nodes: Vec<usize>,
    /// Whether each dense leaf is an outlier leaf.
    pub leaf_outlier: Vec<bool>,
}

impl LeafLabels {
    pub fn n_leaves(&self) -> usize {
        self.leaf_nodes.len()
    }
}

pub fn leaf_labels(tree: &ClusterTree) -> LeafLabels {
    let mut labels = vec![0; tree.total_n];
    let mut outlier = vec![false; tree.total_n];
    let mut leaf_nodes = Vec::new();
    let mut leaf_outlier = Vec::new();
    for (dense, leaf) in tree.leaves().enumerate() {
        for &r in &leaf.row_indices {
            labels[r] = dense;
            outlier[r] = leaf.is_outlier_leaf;
        }
        leaf_nodes.push(leaf.node_id);
        leaf_outlier.push(leaf.is_outlier_leaf);
    }
    LeafLabels {
        labels,
        outlier,
        leaf_nodes,
        leaf_outlier,
    }
}
