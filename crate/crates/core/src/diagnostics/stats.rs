//! Test statistics and Monte Carlo error estimates.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Total variation distance `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalized histogram of `values` over `0..n`.
pub fn empirical_distribution(values: impl IntoIterator<Item = usize>, n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n];
    let mut total = 0.0;
    for v in values {
        counts[v] += 1.0;
        total += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of `observed` counts against `expected`
/// probabilities. Cells with expected count below 5 are pooled into one
/// cell. A count in a zero-probability cell gives `p = 0`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> TestResult {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let nt = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected) {
        let e = p * nt;
        if p <= 0.0 {
            if o > 0 {
                return TestResult {
                    statistic: f64::INFINITY,
                    df: 0.0,
                    p_value: 0.0,
                };
            }
            continue;
        }
        if e < 5.0 {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_e > 0.0 {
        stat += (pooled_o - pooled_e).powi(2) / pooled_e;
        cells += 1;
    }
    let df = cells.saturating_sub(1).max(1) as f64;
    let p_value = 1.0 - ChiSquared::new(df).expect("positive df").cdf(stat);
    TestResult {
        statistic: stat,
        df,
        p_value,
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> TestResult {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d
            .max(((i + 1) as f64 / n - f).abs())
            .max((f - i as f64 / n).abs());
    }
    let sq = n.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    TestResult {
        statistic: d,
        df: n,
        p_value: kolmogorov_q(lambda),
    }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Mean and batch-means standard error with `n_batches` equal batches.
pub fn batch_means(series: &[f64], n_batches: usize) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = n / n_batches;
    if size == 0 || n_batches < 2 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// Mean and standard error assuming independent draws.
pub fn mean_se(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("no NaN"));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares line `y = intercept + slope * x` and its `R^2`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = pearson(x, y);
    (slope, intercept, r * r)
}

/// Empirical quantile by linear interpolation, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_and_histogram() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        assert_eq!(
            empirical_distribution([0, 1, 1, 1], 3),
            vec![0.25, 0.75, 0.0]
        );
    }

    #[test]
    fn chi_square_perfect_fit() {
        let r = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5]);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(chi_square_gof(&[1, 9], &[0.0, 1.0]).p_value, 0.0);
    }

    #[test]
    fn ks_uniform() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&x, |v| v.clamp(0.0, 1.0));
        assert!(r.statistic < 1e-3 + 1e-12);
        assert!(r.p_value > 0.99);
        let r = ks_test(&x, |v| (v * v).clamp(0.0, 1.0));
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn spearman_monotone() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        let (slope, icpt, r2) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!(
            (slope - 2.0).abs() < 1e-12 && (icpt - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn batch_means_constant() {
        let (m, se) = batch_means(&[2.0; 100], 20);
        assert_eq!((m, se), (2.0, 0.0));
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0], 0.5) - 2.5).abs() < 1e-12);
    }
}
