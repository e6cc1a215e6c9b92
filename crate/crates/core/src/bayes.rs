//! Conjugate Bayesian inference for the rate matrix.
//!
//! Each column `s` of the generator is parameterized by its exit rate
//! `|A_s| ~ Gamma(alpha1, alpha2)` (shape, rate) and the jump distribution
//! `(p_{s's}, s' != s) ~ Dirichlet(beta)`. Given a path, both update in
//! closed form from dwell times and transition counts. When `pi_0` is tied
//! to the stationary distribution of `A`, the conjugate draw becomes a
//! Metropolis–Hastings proposal.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::gibbs::{initial_trajectory, GibbsConfig, MjpGibbs, ObservationModel};
use crate::mjp::{InitialDistribution, RateMatrix, SufficientStats, TimeInterval, Trajectory};

/// Gamma prior on exit rates and Dirichlet prior on jump targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePrior {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Dirichlet concentration per target state; the entry for the source
    /// state itself is ignored.
    pub beta: Vec<f64>,
}

impl RatePrior {
    pub fn new(alpha1: f64, alpha2: f64, beta: Vec<f64>) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(alpha1) || !ok(alpha2) || beta.is_empty() || !beta.iter().all(|&b| ok(b)) {
            return Err(Error::InvalidConfig(
                "prior hyperparameters must be positive".into(),
            ));
        }
        Ok(Self {
            alpha1,
            alpha2,
            beta,
        })
    }

    pub fn symmetric(alpha1: f64, alpha2: f64, beta: f64, n_states: usize) -> Result<Self> {
        Self::new(alpha1, alpha2, vec![beta; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.beta.len()
    }
}

/// Posterior hyperparameters of one generator column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPosterior {
    pub shape: f64,
    pub rate: f64,
    /// Dirichlet parameters over targets `s' != s`, in increasing `s'`.
    pub dirichlet: Vec<f64>,
}

pub fn posterior_hyperparameters(
    stats: &SufficientStats,
    prior: &RatePrior,
) -> Vec<ColumnPosterior> {
    let n = prior.n_states();
    assert_eq!(
        stats.n_states(),
        n,
        "statistics and prior dimensions differ"
    );
    (0..n)
        .map(|s| ColumnPosterior {
            shape: prior.alpha1 + stats.exits(s) as f64,
            rate: prior.alpha2 + stats.dwell_time(s),
            dirichlet: (0..n)
                .filter(|&t| t != s)
                .map(|t| prior.beta[t] + stats.transitions(s, t) as f64)
                .collect(),
        })
        .collect()
}

/// `log` of a `Gamma(shape, 1)` draw; shapes below one use
/// `G(a) = G(a + 1) U^{1/a}` in log space so tiny draws do not round to 0.
fn log_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

pub(crate) fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_draw(rng, a)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub(crate) fn sample_gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Draws `A | (s0, S, T)` from the conjugate posterior.
pub fn sample_rate_posterior<R: Rng + ?Sized>(
    stats: &SufficientStats,
    prior: &RatePrior,
    rng: &mut R,
) -> RateMatrix {
    let n = prior.n_states();
    let post = posterior_hyperparameters(stats, prior);
    let mut a = DMatrix::zeros(n, n);
    if n == 1 {
        return RateMatrix::zeros(1);
    }
    for (s, col) in post.iter().enumerate() {
        let exit = sample_gamma_rate(rng, col.shape, col.rate);
        let probs = sample_dirichlet(rng, &col.dirichlet);
        let mut off = 0.0;
        for (t, p) in (0..n).filter(|&t| t != s).zip(probs) {
            a[(t, s)] = exit * p;
            off += exit * p;
        }
        a[(s, s)] = -off;
    }
    RateMatrix::new(a).expect("conjugate draws form a generator")
}

/// Draws `A` from the prior.
pub fn sample_rate_prior<R: Rng + ?Sized>(prior: &RatePrior, rng: &mut R) -> RateMatrix {
    sample_rate_posterior(&SufficientStats::zeros(prior.n_states()), prior, rng)
}

/// The unique `pi` with `A pi = 0`, `sum(pi) = 1`.
pub fn stationary_distribution(a: &RateMatrix) -> Result<InitialDistribution> {
    let n = a.n_states();
    if n == 1 {
        return Ok(InitialDistribution::uniform(1));
    }
    let m = a.as_matrix();
    let svd = m.clone().svd(false, false);
    let scale = svd.singular_values.max().max(1.0);
    let null_dim = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= 1e-9 * scale)
        .count();
    if null_dim > 1 {
        return Err(Error::NonUniqueStationary(null_dim));
    }
    // Rows of A sum to the zero row, so the last one is redundant; replace
    // it with the normalization constraint.
    let mut bordered = m.clone();
    for j in 0..n {
        bordered[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = bordered
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular stationary system".into()))?;
    let residual = (m * &pi).amax();
    if residual > 1e-9 * scale {
        return Err(Error::Numerical(format!("stationary residual {residual}")));
    }
    if pi.iter().any(|&p| p < -1e-9) {
        return Err(Error::Numerical(
            "stationary solution has negative entries".into(),
        ));
    }
    InitialDistribution::from_weights(pi.iter().map(|&p| p.max(0.0)).collect())
}

/// How `pi_0` relates to the rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistMode {
    Fixed(InitialDistribution),
    /// `pi_0` is the stationary distribution of the current `A`.
    Stationary,
}

impl InitialDistMode {
    pub fn resolve(&self, a: &RateMatrix) -> Result<InitialDistribution> {
        match self {
            Self::Fixed(p) => Ok(p.clone()),
            Self::Stationary => stationary_distribution(a),
        }
    }
}

/// Result of one rate update.
#[derive(Debug, Clone)]
pub struct RateUpdate {
    pub a: RateMatrix,
    pub accepted: bool,
}

/// `min(1, pi_new(s0) / pi_old(s0))`.
pub fn mh_acceptance_probability(
    pi_new: &InitialDistribution,
    pi_old: &InitialDistribution,
    s0: usize,
) -> f64 {
    let old = pi_old.prob(s0);
    if old <= 0.0 {
        return 1.0;
    }
    (pi_new.prob(s0) / old).min(1.0)
}

/// Conjugate draw given the path; in stationary mode, accepted with
/// probability `min(1, pi~(s0) / pi(s0))`.
pub fn mh_rate_update<R: Rng + ?Sized>(
    current: &RateMatrix,
    traj: &Trajectory,
    prior: &RatePrior,
    mode: &InitialDistMode,
    rng: &mut R,
) -> Result<RateUpdate> {
    let stats = SufficientStats::from_trajectory(traj, prior.n_states());
    let proposal = sample_rate_posterior(&stats, prior, rng);
    match mode {
        InitialDistMode::Fixed(_) => Ok(RateUpdate {
            a: proposal,
            accepted: true,
        }),
        InitialDistMode::Stationary => {
            let pi_new = stationary_distribution(&proposal)?;
            let pi_old = stationary_distribution(current)?;
            let p = mh_acceptance_probability(&pi_new, &pi_old, traj.initial_state());
            if p >= 1.0 || rng.gen::<f64>() < p {
                Ok(RateUpdate {
                    a: proposal,
                    accepted: true,
                })
            } else {
                Ok(RateUpdate {
                    a: current.clone(),
                    accepted: false,
                })
            }
        }
    }
}

/// One post-burn-in draw of the joint chain.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub a: RateMatrix,
    pub stats: SufficientStats,
}

/// Acceptance bookkeeping of a joint run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesRunSummary {
    pub proposals: usize,
    pub accepted: usize,
}

impl BayesRunSummary {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Alternates the path kernel under the current `A` (with `omega`
/// recomputed from that `A`) and the rate update given the path only.
///
/// `init` fixes the starting `(A, path)`; by default `A` is drawn from the
/// prior and the path from its prior given `A`.
#[allow(clippy::too_many_arguments)]
pub fn full_bayes_chain_with<O, F>(
    obs: &O,
    interval: TimeInterval,
    prior: &RatePrior,
    mode: &InitialDistMode,
    config: &GibbsConfig,
    init: Option<(RateMatrix, Trajectory)>,
    mut on_sample: F,
) -> Result<BayesRunSummary>
where
    O: ObservationModel + ?Sized,
    F: FnMut(usize, &RateMatrix, &Trajectory),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut a, mut traj) = match init {
        Some(x) => x,
        None => {
            let a = sample_rate_prior(prior, &mut rng);
            let pi0 = mode.resolve(&a)?;
            let traj = initial_trajectory(&a, &pi0, obs, interval, &mut rng);
            (a, traj)
        }
    };
    let mut summary = BayesRunSummary {
        proposals: 0,
        accepted: 0,
    };
    for i in 0..config.n_burnin + config.n_samples {
        let pi0 = mode.resolve(&a)?;
        let omega = config.omega_multiplier.omega(&a);
        let mut kernel = MjpGibbs::new(a.clone(), pi0, omega)?;
        traj = kernel.sweep(&traj, obs, &mut rng)?;
        let upd = mh_rate_update(&a, &traj, prior, mode, &mut rng)?;
        summary.proposals += 1;
        summary.accepted += upd.accepted as usize;
        a = upd.a;
        if i >= config.n_burnin {
            on_sample(i - config.n_burnin, &a, &traj);
        }
    }
    Ok(summary)
}

/// Collects `(A, stats)` for every post-burn-in sweep.
pub fn full_bayes_chain<O: ObservationModel + ?Sized>(
    obs: &O,
    interval: TimeInterval,
    prior: &RatePrior,
    mode: &InitialDistMode,
    config: &GibbsConfig,
) -> Result<Vec<PosteriorSample>> {
    let n = prior.n_states();
    let mut out = Vec::with_capacity(config.n_samples);
    full_bayes_chain_with(obs, interval, prior, mode, config, None, |_, a, traj| {
        out.push(PosteriorSample {
            a: a.clone(),
            stats: SufficientStats::from_trajectory(traj, n),
        });
    })?;
    Ok(out)
}

/// One CSV row per sweep: off-diagonal rates `a_{to}_{from}` (row-major by
/// `(to, from)`), then dwell times and transition counts.
pub fn write_posterior_csv<W: Write>(writer: W, samples: &[PosteriorSample]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let Some(first) = samples.first() else {
        w.flush()?;
        return Ok(());
    };
    let n = first.a.n_states();
    let mut header = vec!["sweep".to_string()];
    for to in 0..n {
        for from in 0..n {
            if to != from {
                header.push(format!("a_{to}_{from}"));
            }
        }
    }
    header.extend(SufficientStats::labels(n));
    header.push("n_total".into());
    w.write_record(&header)?;
    for (i, smp) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        for to in 0..n {
            for from in 0..n {
                if to != from {
                    row.push(format!("{:.16e}", smp.a.rate(to, from)));
                }
            }
        }
        let stats = smp.stats.to_vec();
        row.extend(stats[..n].iter().map(|d| format!("{d:.16e}")));
        row.extend(stats[n..].iter().map(|c| format!("{}", *c as u64)));
        row.push(smp.stats.total_transitions().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
