//! Per-point bandwidth calibration and the symmetric fuzzy neighbour graph.

use super::knn::NeighborGraph;

pub const SMOOTH_ITERATIONS: usize = 64;
pub const SMOOTH_TOLERANCE: f64 = 1e-5;
/// Sigma never drops below this fraction of the point's mean neighbour distance.
pub const MIN_SIGMA_SCALE: f64 = 1e-3;
// keeps sigma strictly positive when every neighbour is a duplicate
const ABSOLUTE_MIN_SIGMA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Set when sigma hit the floor or the search ended outside tolerance.
    pub floored: Vec<bool>,
}

fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum()
}

/// Residual of the calibration equation for one point.
pub fn calibration_residual(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    membership_sum(distances, rho, sigma) - (distances.len() as f64).log2()
}

/// Finds, per point, `rho` (nearest-neighbour distance) and `sigma` such that
/// the memberships of its k neighbours sum to `log2(k)`.
pub fn smooth_knn(graph: &NeighborGraph) -> Calibration {
    let n = graph.n();
    let target = (graph.k() as f64).log2();
    let mut cal = Calibration {
        rho: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        floored: Vec::with_capacity(n),
    };
    for i in 0..n {
        let dist = graph.distances(i);
        let rho = dist[0];
        let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut converged = false;
        for _ in 0..SMOOTH_ITERATIONS {
            let psum = membership_sum(dist, rho, mid);
            if (psum - target).abs() < SMOOTH_TOLERANCE {
                converged = true;
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let mean = dist.iter().sum::<f64>() / dist.len() as f64;
        let floor = (MIN_SIGMA_SCALE * mean).max(ABSOLUTE_MIN_SIGMA);
        let floored = mid < floor;
        cal.rho.push(rho);
        cal.sigma.push(mid.max(floor));
        cal.floored.push(floored || !converged);
    }
    cal
}

/// Sparse symmetric membership graph; each unordered pair is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    n: usize,
    /// `(i, j, w)` with `i < j`, sorted, `w` in `(0, 1]`.
    edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    /// Symmetrizes directed memberships with the probabilistic t-conorm
    /// `a + b - a*b`.
    pub fn from_directed(n: usize, directed: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut halves: Vec<((usize, usize), bool, f64)> = directed
            .into_iter()
            .filter(|&(i, j, _)| i != j)
            .map(|(i, j, a)| ((i.min(j), i.max(j)), i < j, a))
            .collect();
        halves.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(halves.len());
        let mut idx = 0;
        while idx < halves.len() {
            let (key, _, _) = halves[idx];
            let (mut forward, mut backward) = (0.0f64, 0.0f64);
            while idx < halves.len() && halves[idx].0 == key {
                let (_, is_forward, a) = halves[idx];
                if is_forward {
                    forward = forward.max(a);
                } else {
                    backward = backward.max(a);
                }
                idx += 1;
            }
            let w = forward + backward - forward * backward;
            if w > 0.0 {
                edges.push((key.0, key.1, w.min(1.0)));
            }
        }
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map_or(0.0, |pos| self.edges[pos].2)
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            deg[i] += w;
            deg[j] += w;
        }
        deg
    }
}

/// Directed membership `exp(-max(0, d - rho_i) / sigma_i)` for every kNN
/// edge, symmetrized into a [`FuzzyGraph`].
pub fn fuzzy_union(graph: &NeighborGraph, cal: &Calibration) -> FuzzyGraph {
    let directed = (0..graph.n()).flat_map(|i| {
        graph.neighbors(i).iter().zip(graph.distances(i)).map(move |(&j, &d)| {
            let excess = d - cal.rho[i];
            let a = if excess <= 0.0 {
                1.0
            } else {
                (-excess / cal.sigma[i]).exp()
            };
            (i, j, a)
        })
    });
    FuzzyGraph::from_directed(graph.n(), directed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::Points;
    use crate::reduce::knn::{exact_knn, NeighborGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_row(distances: Vec<f64>) -> NeighborGraph {
        // point 0 with neighbours 1..=k; other rows are filler
        let k = distances.len();
        let n = k + 1;
        let mut idx = Vec::new();
        let mut dist = Vec::new();
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.truncate(k);
            idx.extend(others);
            if i == 0 {
                dist.extend(distances.iter().copied());
            } else {
                dist.extend((1..=k).map(|x| x as f64));
            }
        }
        NeighborGraph::from_rows(k, idx, dist).unwrap()
    }

    #[test]
    fn equal_distances_drive_sigma_to_floor() {
        let g = single_row(vec![2.0, 2.0, 2.0, 2.0]);
        let cal = smooth_knn(&g);
        assert_eq!(cal.rho[0], 2.0);
        assert!(cal.floored[0]);
        assert!((cal.sigma[0] - 2e-3).abs() < 1e-15);
    }

    /// Closed form for distances [1, 2, 3]: with x = exp(-1/sigma) the
    /// equation is 1 + x + x^2 = log2(3).
    fn closed_form_sigma() -> f64 {
        let c = 3f64.log2() - 1.0;
        let x = (-1.0 + (1.0 + 4.0 * c).sqrt()) / 2.0;
        -1.0 / x.ln()
    }

    #[test]
    fn distances_one_two_three() {
        let g = single_row(vec![1.0, 2.0, 3.0]);
        let cal = smooth_knn(&g);
        assert!(!cal.floored[0]);
        let residual = calibration_residual(g.distances(0), cal.rho[0], cal.sigma[0]);
        assert!(residual.abs() < 1e-5, "residual {residual}");
        let oracle = closed_form_sigma();
        assert!((cal.sigma[0] - oracle).abs() < 1e-4, "{} vs {oracle}", cal.sigma[0]);
    }

    #[test]
    fn duplicate_points_give_finite_sigma() {
        let data = [0.5f32, 0.5, 0.5, 0.5];
        let g = exact_knn(Points::new(&data, 2), 1);
        let cal = smooth_knn(&g);
        assert_eq!(cal.rho, vec![0.0, 0.0]);
        assert!(cal.sigma.iter().all(|s| s.is_finite() && *s > 0.0));
        let fg = fuzzy_union(&g, &cal);
        assert_eq!(fg.edges(), &[(0, 1, 1.0)]);
    }

    #[test]
    fn t_conorm_examples() {
        let fg = FuzzyGraph::from_directed(2, [(0, 1, 0.5), (1, 0, 0.2)]);
        assert!((fg.weight(0, 1) - 0.6).abs() < 1e-15);
        let fg = FuzzyGraph::from_directed(2, [(0, 1, 1.0), (1, 0, 1.0)]);
        assert_eq!(fg.weight(1, 0), 1.0);
        let fg = FuzzyGraph::from_directed(3, [(0, 1, 0.0)]);
        assert!(fg.edges().is_empty());
    }

    #[test]
    fn union_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let data: Vec<f32> = (0..n * 3).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let g = exact_knn(Points::new(&data, 3), 6);
        let cal = smooth_knn(&g);
        let fg = fuzzy_union(&g, &cal);

        let mut dense = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for (&j, &d) in g.neighbors(i).iter().zip(g.distances(i)) {
                dense[i][j] = (-((d - cal.rho[i]).max(0.0)) / cal.sigma[i]).exp();
            }
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j {
                    0.0
                } else {
                    dense[i][j] + dense[j][i] - dense[i][j] * dense[j][i]
                };
                let got = fg.weight(i, j);
                assert!((got - want).abs() < 1e-12, "({i},{j}) {got} vs {want}");
                assert_eq!(fg.weight(i, j).to_bits(), fg.weight(j, i).to_bits());
            }
        }
        assert!(fg.edges().iter().all(|&(i, j, w)| i < j && w > 0.0 && w <= 1.0));
    }

    #[test]
    fn residual_within_tolerance_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f32> = (0..300 * 5).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        let g = exact_knn(Points::new(&data, 5), 15);
        let cal = smooth_knn(&g);
        for i in 0..g.n() {
            if !cal.floored[i] {
                let r = calibration_residual(g.distances(i), cal.rho[i], cal.sigma[i]);
                assert!(r.abs() < 1e-5);
            }
        }
        assert!(cal.floored.iter().all(|f| !f));
    }
}
