#![allow(dead_code)]

use mjpgibbs::{RateMatrix, TimeInterval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn iv(a: f64, b: f64) -> TimeInterval {
    TimeInterval::new(a, b).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Off-diagonal rates uniform on `[lo, hi)`.
pub fn random_generator<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> RateMatrix {
    RateMatrix::from_off_diagonal(n, |_, _| rng.gen_range(lo..hi)).unwrap()
}

/// The generator scaled so that its largest exit rate is `target`.
pub fn with_max_exit(a: &RateMatrix, target: f64) -> RateMatrix {
    RateMatrix::new(a.as_matrix() * (target / a.max_exit_rate())).unwrap()
}

pub fn sym2(rate: f64) -> RateMatrix {
    RateMatrix::from_off_diagonal(2, |_, _| rate).unwrap()
}

pub fn histogram(values: impl IntoIterator<Item = usize>, n: usize) -> Vec<u64> {
    let mut h = vec![0u64; n];
    for v in values {
        h[v] += 1;
    }
    h
}

/// A small random HMM with step-dependent column-stochastic transitions.
pub fn random_hmm<R: Rng>(n: usize, steps: usize, rng: &mut R) -> mjpgibbs::ffbs::HmmProblem {
    use nalgebra::DMatrix;
    let column_stochastic = |rng: &mut R| {
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.05..1.0));
        for mut c in m.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
        m
    };
    let transitions = (0..steps).map(|_| column_stochastic(rng)).collect();
    let loglik = DMatrix::from_fn(steps + 1, n, |_, _| rng.gen_range(-3.0..0.0));
    let weights = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let pi0 = mjpgibbs::InitialDistribution::from_weights(weights).unwrap();
    mjpgibbs::ffbs::HmmProblem::new(pi0, transitions, loglik).unwrap()
}

static SERIAL: std::sync::Mutex<()> = std::sync::Mutex::new(());

/// Held by tests in binaries that also time code, so timings run alone.
pub fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}
