//! Native UMAP: neighbour graph, fuzzy simplicial set, layout optimization.

pub mod curve;
pub mod fuzzy;
pub mod knn;
pub mod layout;

use thiserror::Error;

pub use curve::fit_ab;
pub use fuzzy::{fuzzy_union, smooth_knn, Calibration, FuzzyGraph};
pub use knn::{knn_graph, NeighborGraph, DEFAULT_EXACT_MAX};
pub use layout::{optimize_layout, Layout};

use crate::points::Points;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("invalid reduce config: {0}")]
    InvalidConfig(String),
    #[error("k = {k} neighbours need more than {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("invalid neighbour graph: {0}")]
    InvalidGraph(String),
    #[error("empty graph")]
    EmptyGraph,
    #[error("non-finite coordinates after epoch {epoch}")]
    NonFinite { epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub n_components: usize,
    /// `None` picks 200 epochs above 10000 points and 500 otherwise.
    pub n_epochs: Option<usize>,
    pub negative_sample_rate: usize,
    pub seed: u64,
    /// Largest point count for which neighbours are found by brute force.
    pub exact_max: usize,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            n_components: 5,
            n_epochs: None,
            negative_sample_rate: 5,
            seed: 42,
            exact_max: DEFAULT_EXACT_MAX,
        }
    }
}

impl ReduceConfig {
    /// Defaults for the 2-D plotting layout.
    pub fn plot() -> Self {
        Self {
            n_components: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ReduceError> {
        if self.n_neighbors < 2 {
            return Err(ReduceError::InvalidConfig("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist >= 0.0) || !self.min_dist.is_finite() {
            return Err(ReduceError::InvalidConfig(
                "min_dist must be a finite value >= 0".into(),
            ));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(ReduceError::InvalidConfig("spread must be positive".into()));
        }
        if self.n_components == 0 {
            return Err(ReduceError::InvalidConfig("n_components must be at least 1".into()));
        }
        if self.n_epochs == Some(0) {
            return Err(ReduceError::InvalidConfig("n_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn epochs_for(&self, n: usize) -> usize {
        self.n_epochs.unwrap_or(if n > 10_000 { 200 } else { 500 })
    }
}

/// kNN graph, calibration and union. `n_neighbors` is clamped to `n - 1`.
pub fn build_fuzzy_graph(points: Points<'_>, cfg: &ReduceConfig) -> Result<FuzzyGraph, ReduceError> {
    cfg.validate()?;
    let n = points.n();
    if n == 0 {
        return Err(ReduceError::EmptyGraph);
    }
    if n == 1 {
        return Ok(FuzzyGraph::from_directed(1, []));
    }
    let k = cfg.n_neighbors.min(n - 1);
    if k < cfg.n_neighbors {
        log::warn!("n_neighbors {} clamped to {k} for {n} points", cfg.n_neighbors);
    }
    let graph = knn_graph(points, k, cfg.exact_max, cfg.seed)?;
    if graph.is_approximate() {
        log::info!("approximate neighbour search used for {n} points");
    }
    let cal = smooth_knn(&graph);
    let floored = cal.floored.iter().filter(|&&f| f).count();
    if floored > 0 {
        log::debug!("{floored} points hit the sigma floor");
    }
    Ok(fuzzy_union(&graph, &cal))
}

/// Full reduction of `points` to `cfg.n_components` dimensions.
pub fn umap(points: Points<'_>, cfg: &ReduceConfig) -> Result<Layout, ReduceError> {
    let fg = build_fuzzy_graph(points, cfg)?;
    optimize_layout(&fg, cfg)
}
