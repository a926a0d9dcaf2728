//! HDBSCAN over Euclidean points.

pub mod metrics;
pub mod mst;
pub mod tree;

use thiserror::Error;

pub use metrics::adjusted_rand_index;
pub use mst::{build_mst, core_distances, mutual_reachability, prim_mst, MstEdge};
pub use tree::{condense_tree, select_clusters, CondensedRecord, CondensedTree};

use crate::points::Points;

pub const NOISE: i32 = -1;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("min_samples = {min_samples} needs more than {n} points")]
    TooFewPoints { min_samples: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 10,
            min_samples: None,
        }
    }
}

impl ClusterConfig {
    pub fn with_min_cluster_size(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.min_cluster_size < 2 {
            return Err(ClusterError::InvalidConfig(
                "min_cluster_size must be at least 2".into(),
            ));
        }
        if self.min_samples() < 1 {
            return Err(ClusterError::InvalidConfig("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// `-1` for noise, otherwise `0..C` by decreasing cluster size.
    pub labels: Vec<i32>,
    /// Per-point membership strength; 0 for noise.
    pub probabilities: Vec<f64>,
    /// Stability of each cluster, indexed by label.
    pub stabilities: Vec<f64>,
}

impl ClusterAssignment {
    pub fn all_noise(n: usize) -> Self {
        Self {
            labels: vec![NOISE; n],
            probabilities: vec![0.0; n],
            stabilities: Vec::new(),
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.stabilities.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    pub fn members(&self, label: i32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

/// Labels points from the excess-of-mass selection on `tree`.
pub fn extract_clusters(tree: &CondensedTree) -> ClusterAssignment {
    let n = tree.n_points;
    let selected = select_clusters(tree);
    if selected.is_empty() {
        return ClusterAssignment::all_noise(n);
    }
    let parent = tree.cluster_parents();
    let count = tree.n_clusters();
    // owner[c]: the selected cluster containing cluster c, if any; parents
    // always have smaller ids so one ascending pass suffices
    let mut owner: Vec<Option<usize>> = vec![None; count];
    for c in 0..count {
        owner[c] = if selected.binary_search(&(c + n)).is_ok() {
            Some(c + n)
        } else if c == 0 {
            None
        } else {
            owner[parent[c] - n]
        };
    }

    let mut point_owner = vec![None; n];
    let mut point_lambda = vec![0.0; n];
    for r in tree.records.iter().filter(|r| r.child < n) {
        point_owner[r.child] = owner[r.parent - n];
        point_lambda[r.child] = r.lambda;
    }
    let mut lambda_max = vec![0.0f64; count];
    let mut size = vec![0usize; count];
    for i in 0..n {
        if let Some(c) = point_owner[i] {
            lambda_max[c - n] = lambda_max[c - n].max(point_lambda[i]);
            size[c - n] += 1;
        }
    }

    let mut order = selected.clone();
    order.sort_by(|&x, &y| size[y - n].cmp(&size[x - n]).then(x.cmp(&y)));
    let mut label_of = vec![NOISE; count];
    for (label, &c) in order.iter().enumerate() {
        label_of[c - n] = label as i32;
    }
    let stability = tree.stabilities();

    let mut out = ClusterAssignment::all_noise(n);
    for i in 0..n {
        if let Some(c) = point_owner[i] {
            out.labels[i] = label_of[c - n];
            let max = lambda_max[c - n];
            out.probabilities[i] = if max > 0.0 {
                (point_lambda[i] / max).clamp(0.0, 1.0)
            } else {
                1.0
            };
        }
    }
    out.stabilities = order.iter().map(|&c| stability[c - n]).collect();
    out
}

/// Full clustering: core distances, MST, condensed tree and selection.
/// Fewer than `min_cluster_size` points are all noise; `min_samples` is
/// clamped to `n - 1`.
pub fn hdbscan(points: Points<'_>, cfg: &ClusterConfig) -> Result<(ClusterAssignment, CondensedTree), ClusterError> {
    cfg.validate()?;
    let n = points.n();
    if n < cfg.min_cluster_size || n < 2 {
        let tree = CondensedTree {
            n_points: n,
            records: Vec::new(),
        };
        return Ok((ClusterAssignment::all_noise(n), tree));
    }
    let min_samples = cfg.min_samples().min(n - 1);
    if min_samples < cfg.min_samples() {
        log::warn!(
            "min_samples {} clamped to {min_samples} for {n} points",
            cfg.min_samples()
        );
    }
    let core = core_distances(points, min_samples)?;
    let mst = build_mst(points, &core);
    let tree = condense_tree(n, &mst, cfg.min_cluster_size);
    Ok((extract_clusters(&tree), tree))
}
