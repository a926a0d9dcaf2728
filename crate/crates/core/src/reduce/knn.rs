//! k-nearest-neighbour graphs under Euclidean distance.
//!
//! Exact brute force up to a configurable size; above it a random
//! projection forest proposes candidates that are then refined once through
//! neighbours-of-neighbours.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ReduceError;
use crate::points::Points;

/// Brute force is used up to this many points unless configured otherwise.
pub const DEFAULT_EXACT_MAX: usize = 20_000;

const FOREST_TREES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
    approximate: bool,
}

impl NeighborGraph {
    /// Builds a graph from per-row neighbour lists, checking every invariant.
    pub fn from_rows(k: usize, indices: Vec<usize>, distances: Vec<f64>) -> Result<Self, ReduceError> {
        if k == 0 || indices.len() != distances.len() || !indices.len().is_multiple_of(k) {
            return Err(ReduceError::InvalidGraph("ragged neighbour rows".into()));
        }
        let n = indices.len() / k;
        for i in 0..n {
            let row = &indices[i * k..(i + 1) * k];
            let dist = &distances[i * k..(i + 1) * k];
            if row.iter().any(|&j| j == i || j >= n) {
                return Err(ReduceError::InvalidGraph(format!(
                    "row {i} has a self or out-of-range neighbour"
                )));
            }
            if dist.iter().any(|&d| !(d >= 0.0)) || dist.windows(2).any(|w| w[0] > w[1]) {
                return Err(ReduceError::InvalidGraph(format!(
                    "row {i} distances are not sorted non-negative"
                )));
            }
        }
        Ok(Self {
            k,
            indices,
            distances,
            approximate: false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// True when built by the random-projection forest instead of brute force.
    pub fn is_approximate(&self) -> bool {
        self.approximate
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Keeps the `k` closest candidates, ties resolved towards the lower index.
fn top_k(mut candidates: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, by_distance_then_index);
        candidates.truncate(k);
    }
    candidates.sort_by(by_distance_then_index);
    candidates
}

pub fn knn_graph(points: Points<'_>, k: usize, exact_max: usize, seed: u64) -> Result<NeighborGraph, ReduceError> {
    let n = points.n();
    if k == 0 || k >= n {
        return Err(ReduceError::TooFewPoints { k, n });
    }
    if n <= exact_max {
        Ok(exact_knn(points, k))
    } else {
        Ok(approximate_knn(points, k, seed))
    }
}

/// Brute-force scan; every row is independent so rows run in parallel.
pub fn exact_knn(points: Points<'_>, k: usize) -> NeighborGraph {
    let n = points.n();
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let candidates = (0..n).filter(|&j| j != i).map(|j| (points.distance(i, j), j)).collect();
            top_k(candidates, k)
        })
        .collect();
    assemble(rows, k, false)
}

fn assemble(rows: Vec<Vec<(f64, usize)>>, k: usize, approximate: bool) -> NeighborGraph {
    let mut indices = Vec::with_capacity(rows.len() * k);
    let mut distances = Vec::with_capacity(rows.len() * k);
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    NeighborGraph {
        k,
        indices,
        distances,
        approximate,
    }
}

fn approximate_knn(points: Points<'_>, k: usize, seed: u64) -> NeighborGraph {
    let n = points.n();
    let leaf_size = (2 * k).max(32);
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for tree in 0..FOREST_TREES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tree as u64 + 1);
        let mut leaves = Vec::new();
        split_node(points, (0..n).collect(), leaf_size, &mut rng, &mut leaves);
        for leaf in leaves {
            for &i in &leaf {
                candidates[i].extend(leaf.iter().copied().filter(|&j| j != i));
            }
        }
    }
    let first: Vec<Vec<(f64, usize)>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, mut c)| {
            c.sort_unstable();
            c.dedup();
            top_k(c.into_iter().map(|j| (points.distance(i, j), j)).collect(), k)
        })
        .collect();

    let refined: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c: Vec<usize> = first[i].iter().map(|&(_, j)| j).collect();
            for &(_, j) in &first[i] {
                c.extend(first[j].iter().map(|&(_, m)| m));
            }
            c.retain(|&j| j != i);
            c.sort_unstable();
            c.dedup();
            top_k(c.into_iter().map(|j| (points.distance(i, j), j)).collect(), k)
        })
        .collect();

    // A leaf always holds more than k points, so every row is full.
    assemble(refined, k, true)
}

fn split_node(
    points: Points<'_>,
    members: Vec<usize>,
    leaf_size: usize,
    rng: &mut ChaCha8Rng,
    leaves: &mut Vec<Vec<usize>>,
) {
    if members.len() <= leaf_size {
        leaves.push(members);
        return;
    }
    let a = members[rng.random_range(0..members.len())];
    let mut b = members[rng.random_range(0..members.len())];
    if a == b {
        b = members[(members.iter().position(|&m| m == a).unwrap_or(0) + 1) % members.len()];
    }
    let (pa, pb) = (points.row(a), points.row(b));
    let normal: Vec<f64> = pa.iter().zip(pb).map(|(&x, &y)| x as f64 - y as f64).collect();
    let offset: f64 = pa
        .iter()
        .zip(pb)
        .zip(&normal)
        .map(|((&x, &y), &w)| w * (x as f64 + y as f64) / 2.0)
        .sum();

    let (mut left, mut right): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&m| {
        let side: f64 = points.row(m).iter().zip(&normal).map(|(&x, &w)| x as f64 * w).sum();
        side - offset > 0.0
    });
    if left.is_empty() || right.is_empty() {
        // degenerate hyperplane (duplicates): split in half
        let mut all = members;
        right = all.split_off(all.len() / 2);
        left = all;
    }
    split_node(points, left, leaf_size, rng, leaves);
    split_node(points, right, leaf_size, rng, leaves);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn collinear_hand_case() {
        let data = [0.0f32, 1.0, 3.0];
        let g = knn_graph(Points::new(&data, 1), 1, DEFAULT_EXACT_MAX, 0).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.distances(0), &[1.0]);
        assert_eq!(g.distances(1), &[1.0]);
        assert_eq!(g.distances(2), &[2.0]);
    }

    #[test]
    fn k_must_be_below_n() {
        let data = [0.0f32, 1.0, 3.0];
        assert!(matches!(
            knn_graph(Points::new(&data, 1), 3, DEFAULT_EXACT_MAX, 0),
            Err(ReduceError::TooFewPoints { k: 3, n: 3 })
        ));
    }

    #[test]
    fn matches_pairwise_scan() {
        let data = random_points(100, 4, 7);
        let p = Points::new(&data, 4);
        let g = knn_graph(p, 5, DEFAULT_EXACT_MAX, 0).unwrap();
        assert!(!g.is_approximate());
        for i in 0..100 {
            let mut all: Vec<(f64, usize)> = (0..100).filter(|&j| j != i).map(|j| (p.distance(i, j), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..5].iter().map(|x| x.1).collect();
            assert_eq!(g.neighbors(i), want.as_slice());
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let data = [0.0f32, -1.0, 1.0, 2.0];
        let g = knn_graph(Points::new(&data, 1), 2, DEFAULT_EXACT_MAX, 0).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn forest_recall_is_high() {
        let data = random_points(600, 3, 11);
        let p = Points::new(&data, 3);
        let exact = knn_graph(p, 10, usize::MAX, 0).unwrap();
        let approx = knn_graph(p, 10, 100, 5).unwrap();
        assert!(approx.is_approximate());
        let mut hits = 0;
        for i in 0..600 {
            let truth = exact.neighbors(i);
            hits += approx.neighbors(i).iter().filter(|j| truth.contains(j)).count();
            assert!(approx.distances(i).windows(2).all(|w| w[0] <= w[1]));
            assert!(!approx.neighbors(i).contains(&i));
        }
        let recall = hits as f64 / 6000.0;
        assert!(recall > 0.9, "recall {recall}");
    }

    #[test]
    fn from_rows_rejects_self_loops() {
        assert!(NeighborGraph::from_rows(1, vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(NeighborGraph::from_rows(1, vec![1, 0], vec![1.0, 1.0]).is_ok());
    }
}
