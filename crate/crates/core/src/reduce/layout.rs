//! Layout optimization: spectral initialization followed by negative-sampling
//! SGD on the fuzzy graph.
//!
//! Randomness is drawn from ChaCha8 streams: stream `e` serves epoch `e` and
//! every directed edge consumes a fixed block of `1 + negative_sample_rate`
//! draws whether or not it is sampled, so the draw for `(seed, epoch, edge)`
//! does not depend on anything else. The schedule is serial; two runs with
//! the same seed are bitwise identical.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fuzzy::FuzzyGraph;
use super::{ReduceConfig, ReduceError};

pub const SPECTRAL_SWEEPS: usize = 100;
/// Largest residual column norm of `A V - V (V^T A V)` accepted as converged.
pub const SPECTRAL_TOLERANCE: f64 = 1e-2;
pub const INIT_JITTER: f32 = 1e-4;
pub const INIT_EXTENT: f32 = 10.0;
const GRADIENT_CLIP: f32 = 4.0;
const REPULSION_STRENGTH: f32 = 1.0;
const INIT_STREAM: u64 = u64::MAX;
const SPECTRAL_STREAM: u64 = u64::MAX - 1;

/// Low-dimensional coordinates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dim: usize,
    pub coords: Vec<f32>,
    pub seed: u64,
}

impl Layout {
    pub fn n(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> crate::points::Points<'_> {
        crate::points::Points::new(&self.coords, self.dim)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Spectral,
    Random,
}

/// Spectral coordinates, or `None` when the subspace iteration did not
/// converge or the graph is too small for the requested dimension.
pub fn spectral_init(graph: &FuzzyGraph, dim: usize, seed: u64) -> Option<Vec<f32>> {
    let n = graph.n();
    let cols = dim + 1;
    if n <= cols || graph.edges().is_empty() {
        return None;
    }
    let degree = graph.degrees();
    if degree.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    // x -> (x + D^-1/2 W D^-1/2 x) / 2, positive semi-definite with top eigenvalue 1
    let apply = |x: &[f64], out: &mut [f64]| {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = 0.5 * xi;
        }
        for &(i, j, w) in graph.edges() {
            let s = 0.5 * w * inv_sqrt[i] * inv_sqrt[j];
            out[i] += s * x[j];
            out[j] += s * x[i];
        }
    };

    let mut trivial: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
    normalize(&mut trivial);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPECTRAL_STREAM);
    let mut basis: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&trivial, &mut basis)?;

    let mut scratch = vec![0.0; n];
    for _ in 0..SPECTRAL_SWEEPS {
        for v in basis.iter_mut() {
            apply(v, &mut scratch);
            v.copy_from_slice(&scratch);
        }
        orthonormalize(&trivial, &mut basis)?;
    }

    // residual of the invariant-subspace equation
    let images: Vec<Vec<f64>> = basis
        .iter()
        .map(|v| {
            let mut out = vec![0.0; n];
            apply(v, &mut out);
            out
        })
        .collect();
    for (c, image) in images.iter().enumerate() {
        let mut residual = image.clone();
        for v in &basis {
            let h: f64 = v.iter().zip(image).map(|(a, b)| a * b).sum();
            for (r, &x) in residual.iter_mut().zip(v) {
                *r -= h * x;
            }
        }
        let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        if !(norm < SPECTRAL_TOLERANCE) {
            log::debug!("spectral init: column {c} residual {norm:.3e}, falling back to random");
            return None;
        }
    }

    let max_abs = basis.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return None;
    }
    let scale = INIT_EXTENT as f64 / max_abs;
    let mut jitter = ChaCha8Rng::seed_from_u64(seed);
    jitter.set_stream(INIT_STREAM);
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        for v in &basis {
            let noise: f32 = jitter.random_range(-INIT_JITTER..=INIT_JITTER);
            coords.push((v[i] * scale) as f32 + noise);
        }
    }
    Some(coords)
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 1e-300) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// Modified Gram–Schmidt against `fixed`, then among the basis vectors.
fn orthonormalize(fixed: &[f64], basis: &mut [Vec<f64>]) -> Option<()> {
    for c in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(c);
        let v = &mut rest[0];
        for q in std::iter::once(fixed).chain(done.iter().map(Vec::as_slice)) {
            let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (x, &qi) in v.iter_mut().zip(q) {
                *x -= proj * qi;
            }
        }
        normalize(v)?;
    }
    Some(())
}

pub fn random_init(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    (0..n * dim)
        .map(|_| rng.random_range(-INIT_EXTENT..=INIT_EXTENT))
        .collect()
}

/// Initial coordinates plus the method that produced them.
pub fn initialize(graph: &FuzzyGraph, dim: usize, seed: u64) -> (Vec<f32>, InitMethod) {
    match spectral_init(graph, dim, seed) {
        Some(c) => (c, InitMethod::Spectral),
        None => (random_init(graph.n(), dim, seed), InitMethod::Random),
    }
}

fn clip(x: f32) -> f32 {
    x.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

fn squared_distance(coords: &[f32], dim: usize, i: usize, j: usize) -> f32 {
    let (a, b) = (&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform draw in `0..n` from a 64-bit word.
fn draw_index(word: u64, n: usize) -> usize {
    ((word as u128 * n as u128) >> 64) as usize
}

fn draw_unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Optimizes a layout of `graph` in `cfg.n_components` dimensions.
pub fn optimize_layout(graph: &FuzzyGraph, cfg: &ReduceConfig) -> Result<Layout, ReduceError> {
    cfg.validate()?;
    let n = graph.n();
    let dim = cfg.n_components;
    if n == 0 {
        return Err(ReduceError::EmptyGraph);
    }
    if n == 1 {
        return Ok(Layout {
            dim,
            coords: vec![0.0; dim],
            seed: cfg.seed,
        });
    }
    let (a, b) = super::curve::fit_ab(cfg.min_dist, cfg.spread);
    let (a, b) = (a as f32, b as f32);
    let (mut coords, method) = initialize(graph, dim, cfg.seed);
    log::debug!("layout init: {method:?}, n = {n}, dim = {dim}");

    let edges = graph.edges();
    let max_weight = edges.iter().fold(0.0f64, |m, e| m.max(e.2));
    let n_epochs = cfg.epochs_for(n);
    let neg = cfg.negative_sample_rate;
    let mut draws = vec![0u64; 1 + neg];

    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f32 / n_epochs as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        for e in 0..2 * edges.len() {
            for d in draws.iter_mut() {
                *d = rng.next_u64();
            }
            let (u, v, w) = edges[e / 2];
            let (head, tail) = if e % 2 == 0 { (u, v) } else { (v, u) };
            if draw_unit(draws[0]) >= w / max_weight {
                continue;
            }

            let dist_sq = squared_distance(&coords, dim, head, tail);
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dim {
                let grad = clip(coeff * (coords[head * dim + d] - coords[tail * dim + d]));
                coords[head * dim + d] += grad * alpha;
                coords[tail * dim + d] -= grad * alpha;
            }

            for &word in &draws[1..] {
                let other = draw_index(word, n);
                if other == head {
                    continue;
                }
                let dist_sq = squared_distance(&coords, dim, head, other);
                let coeff = if dist_sq > 0.0 {
                    2.0 * REPULSION_STRENGTH * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for d in 0..dim {
                    let grad = if coeff > 0.0 {
                        clip(coeff * (coords[head * dim + d] - coords[other * dim + d]))
                    } else {
                        GRADIENT_CLIP
                    };
                    coords[head * dim + d] += grad * alpha;
                }
            }
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ReduceError::NonFinite { epoch });
        }
    }
    Ok(Layout {
        dim,
        coords,
        seed: cfg.seed,
    })
}
