//! Fits the low-dimensional similarity curve `1 / (1 + a * x^(2b))`.

pub const CURVE_SAMPLES: usize = 300;
const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-6;

pub fn curve(a: f64, b: f64, x: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

/// Target membership: flat up to `min_dist`, exponential decay beyond.
pub fn target(min_dist: f64, spread: f64, x: f64) -> f64 {
    if x <= min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

/// Sample grid `x_i = 3 * spread * i / 300`, `i = 1..=300`.
pub fn sample_grid(spread: f64) -> Vec<f64> {
    (1..=CURVE_SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / CURVE_SAMPLES as f64)
        .collect()
}

fn sse(a: f64, b: f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (curve(a, b, x) - y).powi(2)).sum()
}

/// Levenberg–Marquardt least squares for `(a, b)`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs = sample_grid(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| target(min_dist, spread, x)).collect();
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut err = sse(a, b, &xs, &ys);

    for _ in 0..MAX_ITERATIONS {
        // normal equations J^T J and J^T r for the 2 parameters
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = x.powf(2.0 * b);
            let denom = (1.0 + a * p).powi(2);
            let da = -p / denom;
            let db = -a * p * 2.0 * x.ln() / denom;
            let r = curve(a, b, x) - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(mbb * ga - jab * gb) / det;
            let step_b = -(maa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_err = if na > 0.0 && nb > 0.0 {
                sse(na, nb, &xs, &ys)
            } else {
                f64::INFINITY
            };
            if new_err <= err {
                a = na;
                b = nb;
                err = new_err;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step_a.hypot(step_b) < STEP_TOLERANCE {
                    return (a, b);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    (a, b)
}

pub fn fit_rmse(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    let xs = sample_grid(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| target(min_dist, spread, x)).collect();
    (sse(a, b, &xs, &ys) / xs.len() as f64).sqrt()
}
