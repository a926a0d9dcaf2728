//! Core distances and the mutual-reachability minimum spanning tree.

use rayon::prelude::*;

use super::ClusterError;
use crate::points::Points;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(points: Points<'_>, min_samples: usize) -> Result<Vec<f64>, ClusterError> {
    let n = points.n();
    if min_samples == 0 || min_samples >= n {
        return Err(ClusterError::TooFewPoints { min_samples, n });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| points.distance(i, j)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(d_ab: f64, core_a: f64, core_b: f64) -> f64 {
    d_ab.max(core_a).max(core_b)
}

/// Prim's algorithm over a dense implicit graph on `n` vertices.
///
/// The next vertex is the one with the lowest connecting weight, ties going
/// to the lower vertex index; a vertex's parent only changes on a strictly
/// lower weight or an equal weight from a lower-index parent.
pub fn prim_mst<F>(n: usize, weight: F) -> Vec<MstEdge>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;

    for _ in 1..n {
        key.par_iter_mut()
            .zip(parent.par_iter_mut())
            .zip(in_tree.par_iter())
            .enumerate()
            .for_each(|(v, ((k, p), &done))| {
                if done {
                    return;
                }
                let w = weight(current, v);
                if w < *k || (w == *k && current < *p) {
                    *k = w;
                    *p = current;
                }
            });
        let mut best = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (best == usize::MAX || key[v] < key[best]) {
                best = v;
            }
        }
        in_tree[best] = true;
        edges.push(MstEdge {
            a: parent[best].min(best),
            b: parent[best].max(best),
            weight: key[best],
        });
        current = best;
    }
    edges
}

/// MST of the mutual-reachability graph, computed without materializing the
/// dense matrix.
pub fn build_mst(points: Points<'_>, core: &[f64]) -> Vec<MstEdge> {
    assert_eq!(core.len(), points.n(), "one core distance per point");
    prim_mst(points.n(), |a, b| {
        mutual_reachability(points.distance(a, b), core[a], core[b])
    })
}
