//! Small sampling helpers shared across the samplers.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

/// Draws an index with probability proportional to `weights`.
///
/// Weights must be nonnegative with a positive, finite sum. The last index
/// with positive weight absorbs any rounding slack.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(
        total > 0.0 && total.is_finite(),
        "categorical weights sum to {total}"
    );
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

/// Exponential waiting time with the given rate; `+inf` when the rate is zero.
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = Exp1.sample(rng);
    e / rate
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng);
    draw as u64
}

/// Appends the points of a homogeneous Poisson process with intensity `rate`
/// on `(start, end)` to `out`, in increasing order.
///
/// Count first, then sorted uniform order statistics.
pub fn poisson_points<R: Rng + ?Sized>(
    rng: &mut R,
    rate: f64,
    start: f64,
    end: f64,
    out: &mut Vec<f64>,
) {
    let len = end - start;
    if rate <= 0.0 || len <= 0.0 {
        return;
    }
    let n = sample_poisson(rng, rate * len) as usize;
    if n == 0 {
        return;
    }
    let from = out.len();
    for _ in 0..n {
        // gen::<f64>() is in [0, 1); map to (start, end) and reject the
        // measure-zero left endpoint.
        let mut u: f64 = rng.gen();
        while u == 0.0 {
            u = rng.gen();
        }
        out.push(start + u * len);
    }
    out[from..].sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite times"));
}

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
