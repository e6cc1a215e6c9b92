//! Effective sample size by Geyer's initial positive sequence estimator.

use serde::Serialize;

use crate::error::{Error, Result};

/// An ESS value and whether the series was constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub ess: f64,
    /// Zero-variance series get their nominal length as ESS.
    pub constant: bool,
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// `n / (1 + 2 sum_k rho_k)`, truncating the autocorrelation sum at the
/// first non-positive pair `rho_{2m} + rho_{2m+1}`. Clipped to `(0, n]`.
pub fn effective_sample_size(series: &[f64]) -> Result<EssEstimate> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InvalidConfig(format!(
            "ESS needs at least 10 values, got {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let gamma0 = autocovariance(&centered, 0);
    if !(gamma0 > 0.0) || gamma0 <= 1e-300 {
        return Ok(EssEstimate {
            ess: n as f64,
            constant: true,
        });
    }
    // tau = -1 + 2 * sum_m (rho_{2m} + rho_{2m+1})
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair =
            (autocovariance(&centered, 2 * m) + autocovariance(&centered, 2 * m + 1)) / gamma0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    let ess = (n as f64 / tau).min(n as f64);
    Ok(EssEstimate {
        ess: ess.max(f64::MIN_POSITIVE),
        constant: false,
    })
}

/// ESS of several statistics from one run, with timing.
#[derive(Debug, Clone, Serialize)]
pub struct EssReport {
    pub labels: Vec<String>,
    pub ess: Vec<f64>,
    pub median_ess: f64,
    pub wall_time: f64,
    pub ess_per_second: f64,
    /// Labels of statistics that were constant over the run.
    pub constant: Vec<String>,
}

impl EssReport {
    /// `series[j]` is the trace of statistic `labels[j]`.
    pub fn new(labels: Vec<String>, series: &[Vec<f64>], wall_time: f64) -> Result<Self> {
        if labels.len() != series.len() || series.is_empty() {
            return Err(Error::InvalidConfig(
                "one label per non-empty series list required".into(),
            ));
        }
        let mut ess = Vec::with_capacity(series.len());
        let mut constant = Vec::new();
        for (label, s) in labels.iter().zip(series) {
            let e = effective_sample_size(s)?;
            if e.constant {
                constant.push(label.clone());
            }
            ess.push(e.ess);
        }
        let median_ess = median(&ess);
        let ess_per_second = if wall_time > 0.0 {
            median_ess / wall_time
        } else {
            f64::INFINITY
        };
        Ok(Self {
            labels,
            ess,
            median_ess,
            wall_time,
            ess_per_second,
            constant,
        })
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_series_is_flagged() {
        let e = effective_sample_size(&[3.0; 50]).unwrap();
        assert_eq!(e.ess, 50.0);
        assert!(e.constant);
        assert!(effective_sample_size(&[1.0; 5]).is_err());
    }

    #[test]
    fn white_noise_is_nearly_independent() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..20_000)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let e = effective_sample_size(&x).unwrap().ess;
            assert!((e / 20_000.0 - 1.0).abs() < 0.1, "seed {seed}: {e}");
        }
    }

    #[test]
    fn ar1_matches_integrated_autocorrelation() {
        let phi = 0.9;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Vec::with_capacity(n);
        let mut v = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            v = phi * v + z;
            x.push(v);
        }
        let ratio = effective_sample_size(&x).unwrap().ess / n as f64;
        let expect = (1.0 - phi) / (1.0 + phi);
        assert!(
            (ratio / expect - 1.0).abs() < 0.2,
            "ratio {ratio} vs {expect}"
        );
    }

    #[test]
    fn report_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..100).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let r = EssReport::new(vec!["a".into(), "b".into(), "c".into()], &s, 2.0).unwrap();
        assert_eq!(r.median_ess, median(&r.ess));
        assert!((r.ess_per_second - r.median_ess / 2.0).abs() < 1e-12);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"median_ess\"") && json.contains("\"ess_per_second\""));
    }
}
