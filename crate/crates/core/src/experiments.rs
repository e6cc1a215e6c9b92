//! Reusable experiment setups: the Ω-scaling problem, ESS and burn-in
//! studies, chain-shaped CTBNs and per-sweep timing.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bayes::{full_bayes_chain_with, sample_rate_prior, InitialDistMode, RatePrior};
use crate::ctbn::{
    ctbn_initial_trajectory, CtbnGibbs, CtbnInitial, CtbnModel, CtbnNode, CtbnObservations,
    LotkaVolterraExperiment,
};
use crate::diagnostics::{median, EssReport};
use crate::error::{Error, Result};
use crate::gibbs::{initial_trajectory, run_chain_with, GibbsConfig, MjpGibbs};
use crate::mjp::{
    gillespie_sample, InitialDistribution, RateMatrix, SufficientStats, TimeInterval, Trajectory,
};
use crate::mmpp::{mmpp_simulate, MmppLikelihood, MmppModel, PoissonObservations};
use crate::uniformization::OmegaMultiplier;

/// An MMPP smoothing problem with a random generator: `A` drawn from the
/// rate prior with all hyperparameters 1, uniform `pi0`, emission rate
/// `s + 1` in state `s`.
#[derive(Debug, Clone)]
pub struct ScalingProblem {
    pub model: MmppModel,
    pub interval: TimeInterval,
    pub events: PoissonObservations,
    pub truth: Trajectory,
    pub prior: RatePrior,
}

impl ScalingProblem {
    pub fn generate(n_states: usize, t_end: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = RatePrior::symmetric(1.0, 1.0, 1.0, n_states)?;
        let a = sample_rate_prior(&prior, &mut rng);
        let rates = (1..=n_states).map(|s| s as f64).collect();
        let model = MmppModel::new(a, InitialDistribution::uniform(n_states), rates)?;
        let interval = TimeInterval::new(0.0, t_end)?;
        let (truth, events) = mmpp_simulate(&model, interval, &mut rng);
        Ok(Self {
            model,
            interval,
            events,
            truth,
            prior,
        })
    }

    pub fn likelihood(&self) -> MmppLikelihood<'_> {
        MmppLikelihood {
            events: &self.events,
            rates: &self.model.emission_rates,
        }
    }
}

/// What an ESS run samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMode {
    /// Paths only, at the true generator. Statistics: dwell time per state
    /// and the total number of transitions.
    Fixed,
    /// Paths and generator. Statistics: off-diagonal generator entries.
    Joint,
}

impl StudyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EssRun {
    pub k: f64,
    pub mode: StudyMode,
    pub seed: u64,
    pub n_samples: usize,
    pub median_ess: f64,
    /// Wall time of burn-in plus sampling.
    pub seconds: f64,
    pub ess_per_second: f64,
    pub seconds_per_sweep: f64,
    pub ess_per_sweep: f64,
}

fn fixed_series(stats: &SufficientStats) -> impl Iterator<Item = f64> + '_ {
    stats
        .dwell_times()
        .iter()
        .copied()
        .chain(std::iter::once(stats.total_transitions() as f64))
}

/// One chain at `Omega = k max_s |A_s|`, timed and summarized by the
/// median ESS of its statistics.
pub fn ess_run(
    problem: &ScalingProblem,
    k: f64,
    mode: StudyMode,
    n_burnin: usize,
    n_samples: usize,
    seed: u64,
) -> Result<EssRun> {
    let n = problem.model.n_states();
    let config = GibbsConfig {
        omega_multiplier: OmegaMultiplier::new(k)?,
        n_burnin,
        n_samples,
        seed,
        keep_paths: false,
    };
    let obs = problem.likelihood();
    let mut series: Vec<Vec<f64>>;
    let labels: Vec<String>;
    let start = Instant::now();
    match mode {
        StudyMode::Fixed => {
            labels = (0..n)
                .map(|s| format!("dwell_{s}"))
                .chain(std::iter::once("n_total".into()))
                .collect();
            series = vec![Vec::with_capacity(n_samples); n + 1];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let init = initial_trajectory(
                &problem.model.a,
                &problem.model.pi0,
                &obs,
                problem.interval,
                &mut rng,
            );
            run_chain_with(
                &init,
                &problem.model.a,
                &problem.model.pi0,
                &obs,
                &config,
                |_, traj| {
                    let stats = SufficientStats::from_trajectory(traj, n);
                    for (s, v) in series.iter_mut().zip(fixed_series(&stats)) {
                        s.push(v);
                    }
                },
            )?;
        }
        StudyMode::Joint => {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|to| {
                    (0..n)
                        .filter(move |&from| from != to)
                        .map(move |from| (to, from))
                })
                .collect();
            labels = pairs
                .iter()
                .map(|(to, from)| format!("a_{to}_{from}"))
                .collect();
            series = vec![Vec::with_capacity(n_samples); pairs.len()];
            let mode = InitialDistMode::Fixed(problem.model.pi0.clone());
            full_bayes_chain_with(
                &obs,
                problem.interval,
                &problem.prior,
                &mode,
                &config,
                None,
                |_, a, _| {
                    for (s, &(to, from)) in series.iter_mut().zip(&pairs) {
                        s.push(a.rate(to, from));
                    }
                },
            )?;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let report = EssReport::new(labels, &series, seconds)?;
    let sweeps = (n_burnin + n_samples).max(1) as f64;
    Ok(EssRun {
        k,
        mode,
        seed,
        n_samples,
        median_ess: report.median_ess,
        seconds,
        ess_per_second: report.ess_per_second,
        seconds_per_sweep: seconds / sweeps,
        ess_per_sweep: report.median_ess / n_samples.max(1) as f64,
    })
}

/// Median over replicates of each per-run quantity, for one `(k, mode)`.
#[derive(Debug, Clone, Serialize)]
pub struct EssSummary {
    pub k: f64,
    pub mode: StudyMode,
    pub replicates: usize,
    pub median_ess: f64,
    pub seconds: f64,
    pub ess_per_second: f64,
    pub seconds_per_sweep: f64,
    pub ess_per_sweep: f64,
}

/// Groups runs by `(k, mode)` in first-seen order.
pub fn summarize_ess_runs(runs: &[EssRun]) -> Vec<EssSummary> {
    let mut keys: Vec<(f64, StudyMode)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|&(k, m)| k == r.k && m == r.mode) {
            keys.push((r.k, r.mode));
        }
    }
    keys.into_iter()
        .map(|(k, mode)| {
            let group: Vec<&EssRun> = runs.iter().filter(|r| r.k == k && r.mode == mode).collect();
            let med =
                |f: fn(&EssRun) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            EssSummary {
                k,
                mode,
                replicates: group.len(),
                median_ess: med(|r| r.median_ess),
                seconds: med(|r| r.seconds),
                ess_per_second: med(|r| r.ess_per_second),
                seconds_per_sweep: med(|r| r.seconds_per_sweep),
                ess_per_sweep: med(|r| r.ess_per_sweep),
            }
        })
        .collect()
}

/// Starting paths spread over the range of jump counts: one constant path
/// per state, then prior draws under the generator scaled by
/// `5, 10, 20, ...`.
pub fn dispersed_initializations(
    problem: &ScalingProblem,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let n = problem.model.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i < n {
            out.push(Trajectory::constant(i, problem.interval));
        } else {
            let scale = 5.0 * 2f64.powi((i - n) as i32);
            let fast = RateMatrix::new(problem.model.a.as_matrix() * scale)?;
            out.push(gillespie_sample(
                &fast,
                &problem.model.pi0,
                problem.interval,
                &mut rng,
            ));
        }
    }
    Ok(out)
}

/// Transition counts of the first `n_sweeps` paths from `init`, with the
/// generator held at its true value. Entry 0 is the initial path.
pub fn transition_trace(
    problem: &ScalingProblem,
    init: &Trajectory,
    k: f64,
    n_sweeps: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let config = GibbsConfig {
        omega_multiplier: OmegaMultiplier::new(k)?,
        n_burnin: 0,
        n_samples: n_sweeps,
        seed,
        keep_paths: false,
    };
    let mut trace = vec![init.n_jumps() as u64];
    let obs = problem.likelihood();
    run_chain_with(
        init,
        &problem.model.a,
        &problem.model.pi0,
        &obs,
        &config,
        |_, t| trace.push(t.n_jumps() as u64),
    )?;
    Ok(trace)
}

/// Chain-shaped CTBN `x0 -> x1 -> ...`. The root jumps to each other state
/// at rate 0.1; a child jumps at rate 0.05, plus 0.25 towards its parent's
/// current state. All nodes start in state 0.
pub fn chain_ctbn(n_nodes: usize, cardinality: usize) -> Result<CtbnModel> {
    if n_nodes == 0 || cardinality < 2 {
        return Err(Error::InvalidModel(
            "a chain needs at least one node with two states".into(),
        ));
    }
    let c = cardinality;
    let mut nodes = Vec::with_capacity(n_nodes);
    nodes.push(CtbnNode::dense(
        "x0",
        c,
        vec![],
        vec![RateMatrix::from_off_diagonal(c, |_, _| 0.1)?],
    ));
    for k in 1..n_nodes {
        let gens = (0..c)
            .map(|p| RateMatrix::from_off_diagonal(c, |to, _| if to == p { 0.3 } else { 0.05 }))
            .collect::<Result<Vec<_>>>()?;
        nodes.push(CtbnNode::dense(format!("x{k}"), c, vec![k - 1], gens));
    }
    let initial = CtbnInitial::Product(vec![InitialDistribution::point_mass(c, 0); n_nodes]);
    CtbnModel::new(nodes, initial)
}

/// Median seconds per sweep over `repeats` timed runs of `n_sweeps` each,
/// after one untimed warm-up sweep.
pub fn median_sweep_seconds(
    repeats: usize,
    n_sweeps: usize,
    mut sweep: impl FnMut() -> Result<()>,
) -> Result<f64> {
    sweep()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..n_sweeps {
            sweep()?;
        }
        times.push(start.elapsed().as_secs_f64() / n_sweeps.max(1) as f64);
    }
    Ok(median(&times))
}

/// `count` event times spread uniformly at random over `interval`, sorted.
pub fn uniform_events<R: Rng + ?Sized>(
    count: usize,
    interval: TimeInterval,
    rng: &mut R,
) -> PoissonObservations {
    let mut t: Vec<f64> = (0..count)
        .map(|_| rng.gen_range(interval.start()..interval.end()))
        .collect();
    t.sort_by(f64::total_cmp);
    PoissonObservations::new(t).expect("sorted finite times")
}

/// Per-sweep time of the fixed-generator MMPP sampler with `count` events.
/// Emission rates are rescaled so that the expected count matches.
pub fn mmpp_sweep_seconds(
    problem: &ScalingProblem,
    count: usize,
    repeats: usize,
    n_sweeps: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interval = problem.interval;
    let events = uniform_events(count, interval, &mut rng);
    let base = &problem.model.emission_rates;
    let mean_rate = base.iter().sum::<f64>() / base.len() as f64;
    let factor = count as f64 / interval.length() / mean_rate;
    let rates: Vec<f64> = base.iter().map(|r| r * factor).collect();
    let obs = MmppLikelihood {
        events: &events,
        rates: &rates,
    };
    let a = &problem.model.a;
    let mut kernel = MjpGibbs::new(
        a.clone(),
        problem.model.pi0.clone(),
        OmegaMultiplier::default().omega(a),
    )?;
    let mut traj = initial_trajectory(a, &problem.model.pi0, &obs, interval, &mut rng);
    for _ in 0..20 {
        traj = kernel.sweep(&traj, &obs, &mut rng)?;
    }
    median_sweep_seconds(repeats, n_sweeps, || {
        traj = kernel.sweep(&traj, &obs, &mut rng)?;
        Ok(())
    })
}

/// Per-sweep time of node-wise Gibbs on `model` after `warmup` sweeps.
pub fn ctbn_sweep_seconds(
    model: &CtbnModel,
    obs: &CtbnObservations,
    interval: TimeInterval,
    warmup: usize,
    repeats: usize,
    n_sweeps: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mult = OmegaMultiplier::default();
    let mut traj = ctbn_initial_trajectory(model, obs, interval, mult, &mut rng)?;
    let mut kernel = CtbnGibbs::new(model, mult);
    for _ in 0..warmup {
        traj = kernel.sweep(&traj, obs, &mut rng)?;
    }
    median_sweep_seconds(repeats, n_sweeps, || {
        traj = kernel.sweep(&traj, obs, &mut rng)?;
        Ok(())
    })
}

/// Per-sweep time of the Lotka–Volterra smoother at population cap `cap`,
/// otherwise using the settings of `base`.
pub fn lotka_volterra_sweep_seconds(
    base: &LotkaVolterraExperiment,
    cap: usize,
    repeats: usize,
    n_sweeps: usize,
    seed: u64,
) -> Result<f64> {
    let exp = LotkaVolterraExperiment {
        cap,
        ..base.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, _, obs) = exp.generate(&mut rng)?;
    ctbn_sweep_seconds(&model, &obs, exp.interval()?, 20, repeats, n_sweeps, seed)
}
