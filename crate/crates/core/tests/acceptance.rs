//! End-to-end acceptance criteria. Each test prints one `[PASS]`/`[FAIL]`
//! line and then asserts. The tests hold a shared lock so that timings are
//! not disturbed by each other.

mod common;

use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use common::{iv, random_generator, random_hmm, rng};
use mjpgibbs::bayes::{
    mh_rate_update, posterior_hyperparameters, sample_rate_prior, InitialDistMode, RatePrior,
};
use mjpgibbs::ctbn::{
    amalgamate, ctbn_initial_trajectory, run_ctbn_chain_with, ConditionalStats, CtbnGibbsConfig,
    CtbnInitial, CtbnModel, CtbnNode, CtbnObservations, CtbnTrajectory, LotkaVolterraExperiment,
    DEFAULT_AMALGAMATION_CAP,
};
use mjpgibbs::diagnostics::stats::{
    batch_means, chi_square_gof, ks_test, quantile, spearman, total_variation,
};
use mjpgibbs::diagnostics::{
    average_relative_error, discretized_posterior, enumerate_hmm_posterior,
    exact_smoothed_marginals, transition_probabilities,
};
use mjpgibbs::experiments::{
    dispersed_initializations, ess_run, mmpp_sweep_seconds, summarize_ess_runs, transition_trace,
    ScalingProblem, StudyMode,
};
use mjpgibbs::ffbs::{ffbs_sample, forward_marginals};
use mjpgibbs::gibbs::{gibbs_kernel_allow_degenerate, run_chain_with};
use mjpgibbs::mmpp::{MmppLikelihood, PoissonObservations};
use mjpgibbs::model_file::MjpModel;
use mjpgibbs::uniformization::{sample_uniformized, thin};
use mjpgibbs::{
    gillespie_sample, DiscreteObservations, GibbsConfig, InitialDistribution, MjpGibbs,
    NoObservations, OmegaMultiplier, RateMatrix, SufficientStats, Trajectory,
};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, pass: bool, details: String, started: Instant) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[{tag}] {name}: {details} ({:.1}s)\n",
        started.elapsed().as_secs_f64()
    );
    // written to the raw handle so the line shows up even when output is captured
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "{name}: {details}");
}

fn model_path(name: &str) -> String {
    format!("{}/models/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn fixed_config(k: f64, n_burnin: usize, n_samples: usize, seed: u64) -> GibbsConfig {
    GibbsConfig {
        omega_multiplier: OmegaMultiplier::new(k).unwrap(),
        n_burnin,
        n_samples,
        seed,
        keep_paths: false,
    }
}

#[test]
fn uniformized_sampling_matches_matrix_exponential() {
    let _g = serial();
    let started = Instant::now();
    let reps = 100_000;
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let a = random_generator(4, 0.1, 2.0, &mut r);
        let weights = (0..4).map(|_| r.gen_range(0.1..1.0)).collect();
        let pi0 = InitialDistribution::from_weights(weights).unwrap();
        let p = transition_probabilities(&a, 1.0);
        let exact: Vec<f64> = (0..4)
            .map(|s| (0..4).map(|f| p[(s, f)] * pi0.prob(f)).sum())
            .collect();
        for k in [1.0, 2.0, 5.0] {
            let omega = k * a.max_exit_rate();
            let ends = (0..reps).map(|_| {
                thin(&sample_uniformized(&a, &pi0, iv(0.0, 1.0), omega, &mut r).unwrap())
                    .final_state()
            });
            let emp = mjpgibbs::diagnostics::stats::empirical_distribution(ends, 4);
            worst = worst.max(total_variation(&emp, &exact));
        }
    }
    report(
        "uniformized sampling matches matrix exponential",
        worst < 0.01,
        format!("max TV over 3 generators x k in {{1,2,5}} = {worst:.4} (< 0.01)"),
        started,
    );
}

#[test]
fn ffbs_matches_enumerated_posteriors() {
    let _g = serial();
    let started = Instant::now();
    let mut r = rng(1002);
    let draws = 100_000;
    let mut min_p: f64 = 1.0;
    let mut max_ll_err: f64 = 0.0;
    let instances = [(2, 12), (3, 7), (4, 6), (6, 4), (8, 4), (16, 3), (64, 2)];
    for &(n, points) in &instances {
        let problem = random_hmm(n, points - 1, &mut r);
        let exact = enumerate_hmm_posterior(&problem).unwrap();
        let mut counts = vec![0u64; exact.path_probs.len()];
        for _ in 0..draws {
            let s = ffbs_sample(&problem, &mut r).unwrap();
            counts[exact.encode(&s.states)] += 1;
        }
        let test = chi_square_gof(&counts, &exact.path_probs);
        min_p = min_p.min(test.p_value);
        let fwd = forward_marginals(&problem).unwrap();
        max_ll_err = max_ll_err.max((fwd.log_marginal - exact.log_marginal).abs());
    }
    report(
        "ffbs matches enumerated posteriors",
        min_p > 0.001 && max_ll_err < 1e-10,
        format!("{} instances, min chi-square p = {min_p:.4} (> 0.001), max |log-marginal error| = {max_ll_err:.2e} (< 1e-10)", instances.len()),
        started,
    );
}

#[test]
fn gibbs_chain_targets_exact_smoothing_posterior() {
    let _g = serial();
    let started = Instant::now();
    let two = RateMatrix::from_rows(&[vec![-0.8, 1.5], vec![0.8, -1.5]]).unwrap();
    let three = RateMatrix::from_rows(&[
        vec![-1.0, 0.5, 0.2],
        vec![0.6, -0.9, 0.8],
        vec![0.4, 0.4, -1.0],
    ])
    .unwrap();
    let emit2 = vec![vec![0.8, 0.3], vec![0.2, 0.7]];
    let emit3 = vec![
        vec![0.7, 0.15, 0.15],
        vec![0.15, 0.7, 0.15],
        vec![0.15, 0.15, 0.7],
    ];
    let cases = [
        (
            two,
            InitialDistribution::new(vec![0.4, 0.6]).unwrap(),
            DiscreteObservations::with_emission(vec![1.2], &[1], &emit2).unwrap(),
        ),
        (
            three,
            InitialDistribution::new(vec![0.5, 0.3, 0.2]).unwrap(),
            DiscreteObservations::with_emission(vec![0.7, 2.1], &[2, 0], &emit3).unwrap(),
        ),
    ];
    let interval = iv(0.0, 3.0);
    let query = [0.0, 0.6, 1.2, 2.0, 3.0];
    let mut failures = Vec::new();
    let mut worst_abs: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (case, (a, pi0, obs)) in cases.iter().enumerate() {
        let n = a.n_states();
        let exact = exact_smoothed_marginals(a, pi0, obs, interval, &query).unwrap();
        let mut ind = vec![vec![Vec::with_capacity(10_000); n]; query.len()];
        let mut r = rng(1003 + case as u64);
        let init = mjpgibbs::initial_trajectory(a, pi0, obs, interval, &mut r);
        run_chain_with(
            &init,
            a,
            pi0,
            obs,
            &fixed_config(2.0, 1000, 10_000, 1010 + case as u64),
            |_, traj| {
                for (q, &t) in query.iter().enumerate() {
                    let s = traj.state_at(t);
                    for (x, v) in ind[q].iter_mut().enumerate() {
                        v.push((s == x) as u8 as f64);
                    }
                }
            },
        )
        .unwrap();
        for q in 0..query.len() {
            for x in 0..n {
                let (mean, se) = batch_means(&ind[q][x], 50);
                let diff = (mean - exact[q][x]).abs();
                worst_abs = worst_abs.max(diff);
                worst_z = worst_z.max(if se > 0.0 { diff / se } else { 0.0 });
                if diff > 3.0 * se || diff > 0.02 {
                    failures.push(format!(
                        "{n}-state t={} s={x}: {mean:.4} vs {:.4} (se {se:.4})",
                        query[q], exact[q][x]
                    ));
                }
            }
        }
    }
    report(
        "gibbs chain targets exact smoothing posterior",
        failures.is_empty(),
        format!(
            "max |diff| = {worst_abs:.4} (< 0.02), max diff/se = {worst_z:.2} (< 3) {failures:?}"
        ),
        started,
    );
}

#[test]
fn equal_rate_dominating_rate_locks_jump_times() {
    let _g = serial();
    let started = Instant::now();
    let a = RateMatrix::from_rows(&[
        vec![-1.0, 0.5, 0.5],
        vec![0.5, -1.0, 0.5],
        vec![0.5, 0.5, -1.0],
    ])
    .unwrap();
    let pi0 = InitialDistribution::uniform(3);
    let obs = NoObservations { n_states: 3 };
    let mut r = rng(1004);
    let init = gillespie_sample(&a, &pi0, iv(0.0, 5.0), &mut r);
    let mut traj = init.clone();
    let mut changed = 0;
    for _ in 0..100 {
        traj = gibbs_kernel_allow_degenerate(&traj, &a, &pi0, &obs, a.max_exit_rate(), &mut r)
            .unwrap();
        changed += (traj.jump_times() != init.jump_times()) as usize;
    }
    report(
        "equal-rate dominating rate locks jump times",
        changed == 0,
        format!(
            "{} jumps, jump-time set changed in {changed} of 100 sweeps",
            init.n_jumps()
        ),
        started,
    );
}

/// Fixed path with hand-counted statistics.
fn hand_counted_path() -> Trajectory {
    // 0 on [0,1), 1 on [1,1.5), 2 on [1.5,3), 0 on [3,3.25), 1 on [3.25,4]
    Trajectory::new(0, vec![1.0, 1.5, 3.0, 3.25], vec![1, 2, 0, 1], iv(0.0, 4.0)).unwrap()
}

/// `|A_0|` after one joint sweep started from an exact posterior draw.
fn geweke_draws(mode: &InitialDistMode, prior: &RatePrior, reps: usize, seed: u64) -> Vec<f64> {
    let emission = vec![
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
    ];
    let times = vec![0.5, 1.5, 2.5];
    let interval = iv(0.0, 3.0);
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let a = sample_rate_prior(prior, &mut r);
        let pi0 = mode.resolve(&a).unwrap();
        let truth = gillespie_sample(&a, &pi0, interval, &mut r);
        let values: Vec<usize> = times
            .iter()
            .map(|&t| {
                let model = MjpModel {
                    observation_matrix: Some(emission.clone()),
                    ..MjpModel::new(a.clone(), pi0.clone())
                };
                model.sample_observation(truth.state_at(t), &mut r)
            })
            .collect();
        let obs = DiscreteObservations::with_emission(times.clone(), &values, &emission).unwrap();
        let traj = MjpGibbs::new(a.clone(), pi0, 2.0 * a.max_exit_rate())
            .unwrap()
            .sweep(&truth, &obs, &mut r)
            .unwrap();
        out.push(
            mh_rate_update(&a, &traj, prior, mode, &mut r)
                .unwrap()
                .a
                .exit_rate(0),
        );
    }
    out
}

#[test]
fn conjugate_updates_are_exact() {
    let _g = serial();
    let started = Instant::now();
    let prior = RatePrior::new(1.5, 2.0, vec![0.5, 1.0, 2.0]).unwrap();
    let stats = SufficientStats::from_trajectory(&hand_counted_path(), 3);
    let post = posterior_hyperparameters(&stats, &prior);
    let expected = [
        (1.5 + 2.0, 2.0 + 1.25, vec![1.0 + 2.0, 2.0]),
        (1.5 + 1.0, 2.0 + 1.25, vec![0.5, 2.0 + 1.0]),
        (1.5 + 1.0, 2.0 + 1.5, vec![0.5 + 1.0, 1.0]),
    ];
    let exact = post
        .iter()
        .zip(&expected)
        .all(|(p, (shape, rate, dir))| p.shape == *shape && p.rate == *rate && &p.dirichlet == dir);

    let geweke_prior = RatePrior::symmetric(2.0, 1.5, 1.0, 3).unwrap();
    let gamma = Gamma::new(2.0, 1.5).unwrap();
    let fixed = geweke_draws(
        &InitialDistMode::Fixed(InitialDistribution::uniform(3)),
        &geweke_prior,
        10_000,
        1005,
    );
    let stationary = geweke_draws(&InitialDistMode::Stationary, &geweke_prior, 10_000, 1006);
    let p_fixed = ks_test(&fixed, |x| gamma.cdf(x)).p_value;
    let p_stat = ks_test(&stationary, |x| gamma.cdf(x)).p_value;
    report(
        "conjugate updates are exact",
        exact && p_fixed > 0.001 && p_stat > 0.001,
        format!("hyperparameters exact: {exact}; prior-reproduction KS p = {p_fixed:.3} (fixed pi0), {p_stat:.3} (stationary pi0), both > 0.001"),
        started,
    );
}

#[test]
fn mmpp_dwell_matches_discretized_reference() {
    let _g = serial();
    let started = Instant::now();
    let model =
        MjpModel::from_json(std::fs::File::open(model_path("mmpp_two_state.json")).unwrap())
            .unwrap();
    let events = PoissonObservations::read_csv(
        std::fs::File::open(model_path("mmpp_two_state_events.csv")).unwrap(),
    )
    .unwrap();
    let rates = model.emission_rates.clone().unwrap();
    let lik = MmppLikelihood {
        events: &events,
        rates: &rates,
    };
    let interval = iv(0.0, 10.0);
    let reference = discretized_posterior(&model.a, &model.pi0, &lik, interval, 10_000)
        .unwrap()
        .expected_dwell();
    let mut r = rng(1007);
    let init = mjpgibbs::initial_trajectory(&model.a, &model.pi0, &lik, interval, &mut r);
    let mut dwell = vec![Vec::new(); 2];
    run_chain_with(
        &init,
        &model.a,
        &model.pi0,
        &lik,
        &fixed_config(2.0, 1000, 40_000, 1008),
        |_, traj| {
            let s = SufficientStats::from_trajectory(traj, 2);
            for (x, d) in dwell.iter_mut().enumerate() {
                d.push(s.dwell_time(x));
            }
        },
    )
    .unwrap();
    let mut ok = events.len() <= 8;
    let mut parts = Vec::new();
    for x in 0..2 {
        let (mean, se) = batch_means(&dwell[x], 50);
        ok &= (mean - reference[x]).abs() < 3.0 * se;
        parts.push(format!(
            "state {x}: {mean:.4} +- {se:.4} vs {:.4}",
            reference[x]
        ));
    }
    report(
        "mmpp dwell matches discretized reference",
        ok,
        format!(
            "{} events; {} (within 3 s.e.)",
            events.len(),
            parts.join(", ")
        ),
        started,
    );
}

#[test]
fn mmpp_sweep_cost_barely_grows_with_event_count() {
    let _g = serial();
    let started = Instant::now();
    let problem = ScalingProblem::generate(5, 10.0, 1009).unwrap();
    let secs: Vec<f64> = [10, 100, 1000]
        .iter()
        .map(|&c| mmpp_sweep_seconds(&problem, c, 7, 300, 1010).unwrap())
        .collect();
    let ratio = secs[2] / secs[0];
    report(
        "mmpp sweep cost barely grows with event count",
        ratio < 2.0,
        format!(
            "seconds per sweep at 10/100/1000 events: {:.2e}/{:.2e}/{:.2e}, ratio {ratio:.2} (< 2)",
            secs[0], secs[1], secs[2]
        ),
        started,
    );
}

fn binary_chain() -> CtbnModel {
    let parent = RateMatrix::from_rows(&[vec![-0.6, 0.9], vec![0.6, -0.9]]).unwrap();
    let child0 = RateMatrix::from_rows(&[vec![-0.3, 1.4], vec![0.3, -1.4]]).unwrap();
    let child1 = RateMatrix::from_rows(&[vec![-1.6, 0.4], vec![1.6, -0.4]]).unwrap();
    CtbnModel::new(
        vec![
            CtbnNode::dense("parent", 2, vec![], vec![parent]),
            CtbnNode::dense("child", 2, vec![0], vec![child0, child1]),
        ],
        CtbnInitial::Product(vec![
            InitialDistribution::uniform(2),
            InitialDistribution::uniform(2),
        ]),
    )
    .unwrap()
}

/// Dwell in each state and jump count, node by node.
fn per_node_stats(traj: &CtbnTrajectory, nodes: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..nodes {
        let s = SufficientStats::from_trajectory(&traj.node_path(k), 2);
        out.extend([
            s.dwell_time(0),
            s.dwell_time(1),
            s.total_transitions() as f64,
        ]);
    }
    out
}

#[test]
fn node_wise_and_amalgamated_samplers_agree() {
    let _g = serial();
    let started = Instant::now();
    let model = binary_chain();
    let interval = iv(0.0, 3.0);
    let obs =
        CtbnObservations::noiseless_joint(&model, &[0.0, 3.0], &[vec![0, 1], vec![1, 0]]).unwrap();
    let sweeps = 10_000;

    let mut node_series = (0..6)
        .map(|_| Vec::with_capacity(sweeps))
        .collect::<Vec<Vec<f64>>>();
    let config = CtbnGibbsConfig {
        n_burnin: 1000,
        n_samples: sweeps,
        seed: 1011,
        ..Default::default()
    };
    run_ctbn_chain_with(&model, &obs, interval, None, &config, |_, traj| {
        for (v, x) in node_series.iter_mut().zip(per_node_stats(traj, 2)) {
            v.push(x);
        }
    })
    .unwrap();

    let (flat_a, flat_pi) = amalgamate(&model, DEFAULT_AMALGAMATION_CAP).unwrap();
    let flat_obs = obs.flat(&model);
    let mut r = rng(1012);
    let init = ctbn_initial_trajectory(&model, &obs, interval, OmegaMultiplier::default(), &mut r)
        .unwrap()
        .to_flat(&model);
    let mut flat_series = (0..6)
        .map(|_| Vec::with_capacity(sweeps))
        .collect::<Vec<Vec<f64>>>();
    run_chain_with(
        &init,
        &flat_a,
        &flat_pi,
        &flat_obs,
        &fixed_config(2.0, 1000, sweeps, 1013),
        |_, flat| {
            let traj = CtbnTrajectory::from_flat(flat, &model).unwrap();
            for (v, x) in flat_series.iter_mut().zip(per_node_stats(&traj, 2)) {
                v.push(x);
            }
        },
    )
    .unwrap();

    let labels = [
        "parent dwell0",
        "parent dwell1",
        "parent jumps",
        "child dwell0",
        "child dwell1",
        "child jumps",
    ];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        let (m1, s1) = batch_means(&node_series[i], 50);
        let (m2, s2) = batch_means(&flat_series[i], 50);
        let z = (m1 - m2).abs() / (s1 * s1 + s2 * s2).sqrt();
        worst = worst.max(z);
        if z.is_nan() || z >= 3.0 {
            ok = false;
            eprintln!(
                "{}: node-wise {m1:.4} +- {s1:.4}, flat {m2:.4} +- {s2:.4}",
                labels[i]
            );
        }
    }
    report(
        "node-wise and amalgamated samplers agree",
        ok,
        format!("6 per-node statistics, max |diff| / combined s.e. = {worst:.2} (< 3)"),
        started,
    );
}

fn chain_error_estimate(
    model: &CtbnModel,
    obs: &CtbnObservations,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let interval = iv(0.0, 20.0);
    let mut sum: Option<Vec<f64>> = None;
    let config = CtbnGibbsConfig {
        n_burnin: 100,
        n_samples: samples,
        seed,
        ..Default::default()
    };
    run_ctbn_chain_with(model, obs, interval, None, &config, |_, traj| {
        let v = ConditionalStats::from_trajectory(model, traj).to_vec();
        match &mut sum {
            Some(s) => s.iter_mut().zip(v).for_each(|(a, b)| *a += b),
            None => sum = Some(v),
        }
    })
    .unwrap();
    sum.unwrap()
        .into_iter()
        .map(|x| x / samples as f64)
        .collect()
}

#[test]
fn chain_ctbn_error_decays_with_samples() {
    let _g = serial();
    let started = Instant::now();
    let model =
        CtbnModel::from_json(std::fs::File::open(model_path("chain5x5.json")).unwrap()).unwrap();
    let obs = CtbnObservations::read_csv(
        std::fs::File::open(model_path("chain5x5_obs.csv")).unwrap(),
        &model,
    )
    .unwrap();
    let reference = chain_error_estimate(&model, &obs, 1_000_000, 1014);
    let reps = 4;
    let error_at = |samples: usize| {
        (0..reps)
            .map(|i| {
                let est = chain_error_estimate(&model, &obs, samples, 1100 + samples as u64 + i);
                average_relative_error(&est, &reference).unwrap().total
            })
            .sum::<f64>()
            / reps as f64
    };
    let small = error_at(100);
    let mid = error_at(1000);
    let large = error_at(10_000);
    let ratio = small / large;
    report(
        "chain ctbn error decays with samples",
        ratio >= 3.0 && small > mid && mid > large,
        format!(
            "mean average relative error over {reps} chains: {small:.4} (1e2), {mid:.4} (1e3), {large:.4} (1e4); decay {ratio:.2}x (>= 3)"
        ),
        started,
    );
}

#[test]
fn omega_tradeoff_favours_small_multipliers() {
    let _g = serial();
    let started = Instant::now();
    let problem = ScalingProblem::generate(5, 10.0, 1015).unwrap();
    let ks = [1.5, 2.0, 3.0, 5.0, 10.0];
    let mut runs = Vec::new();
    for rep in 0..10u64 {
        for &k in &ks {
            for mode in [StudyMode::Fixed, StudyMode::Joint] {
                runs.push(ess_run(&problem, k, mode, 1000, 10_000, 2000 + rep).unwrap());
            }
        }
    }
    let summary = summarize_ess_runs(&runs);
    let pick = |mode: StudyMode, f: fn(&mjpgibbs::experiments::EssSummary) -> f64| -> Vec<f64> {
        ks.iter()
            .map(|&k| f(summary.iter().find(|s| s.k == k && s.mode == mode).unwrap()))
            .collect()
    };
    let cost = pick(StudyMode::Fixed, |s| s.seconds_per_sweep);
    let rho = spearman(&ks, &cost);
    let fixed_rate = pick(StudyMode::Fixed, |s| s.ess_per_second);
    let best = (0..ks.len())
        .max_by(|&i, &j| fixed_rate[i].total_cmp(&fixed_rate[j]))
        .unwrap();
    let joint = pick(StudyMode::Joint, |s| s.ess_per_sweep);
    let spread = joint.iter().copied().fold(f64::MIN, f64::max)
        / joint.iter().copied().fold(f64::MAX, f64::min);
    report(
        "omega trade-off favours small multipliers",
        rho > 0.9 && ks[best] <= 3.0 && spread < 2.0,
        format!(
            "cost Spearman rho = {rho:.2} (> 0.9); fixed-A ESS/s peaks at k = {} (<= 3); joint ESS/sweep {:?} spread {spread:.2}x (< 2)",
            ks[best],
            joint.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
        ),
        started,
    );
}

#[test]
fn dispersed_starts_burn_in_within_five_sweeps() {
    let _g = serial();
    let started = Instant::now();
    let problem = ScalingProblem::generate(5, 10.0, 1015).unwrap();
    let long = transition_trace(&problem, &problem.truth, 2.0, 21_000, 1016).unwrap();
    let tail: Vec<f64> = long[1001..].iter().map(|&x| x as f64).collect();
    let (q25, q75) = (quantile(&tail, 0.25), quantile(&tail, 0.75));
    let inits = dispersed_initializations(&problem, 10, 1017).unwrap();
    let mut entered = 0;
    let mut firsts = Vec::new();
    for (i, init) in inits.iter().enumerate() {
        let trace = transition_trace(&problem, init, 2.0, 5, 1018 + i as u64).unwrap();
        let first = (1..=5).find(|&s| (q25..=q75).contains(&(trace[s] as f64)));
        entered += first.is_some() as usize;
        firsts.push(format!(
            "{}:{}",
            init.n_jumps(),
            first.map_or("-".into(), |s| s.to_string())
        ));
    }
    report(
        "dispersed starts burn in within five sweeps",
        entered >= 8,
        format!("band [{q25}, {q75}]; {entered}/10 runs entered within 5 sweeps (>= 8); initial jumps:first sweep {firsts:?}"),
        started,
    );
}

struct Band {
    mean: Vec<[f64; 2]>,
    lo: Vec<[f64; 2]>,
    hi: Vec<[f64; 2]>,
}

fn lotka_volterra_band(
    model: &CtbnModel,
    obs: &CtbnObservations,
    exp: &LotkaVolterraExperiment,
    grid: &[f64],
    seed: u64,
) -> Band {
    let config = CtbnGibbsConfig {
        n_burnin: 100,
        n_samples: 1000,
        seed,
        ..Default::default()
    };
    let mut values = vec![[Vec::new(), Vec::new()]; grid.len()];
    run_ctbn_chain_with(
        model,
        obs,
        exp.interval().unwrap(),
        None,
        &config,
        |_, traj| {
            for (g, &t) in grid.iter().enumerate() {
                let s = traj.state_at(t);
                values[g][0].push(s[0] as f64);
                values[g][1].push(s[1] as f64);
            }
        },
    )
    .unwrap();
    let stat = |f: &dyn Fn(&[f64]) -> f64| {
        values
            .iter()
            .map(|v| [f(&v[0]), f(&v[1])])
            .collect::<Vec<_>>()
    };
    Band {
        mean: stat(&|v| v.iter().sum::<f64>() / v.len() as f64),
        lo: stat(&|v| quantile(v, 0.05)),
        hi: stat(&|v| quantile(v, 0.95)),
    }
}

#[test]
fn lotka_volterra_smoother_is_self_consistent() {
    let _g = serial();
    let started = Instant::now();
    let exp = LotkaVolterraExperiment::default();
    let (model, _, obs) = exp.generate(&mut rng(1019)).unwrap();
    let grid: Vec<f64> = (0..=225).map(|i| i as f64).collect();
    let a = lotka_volterra_band(&model, &obs, &exp, &grid, 1020);
    let b = lotka_volterra_band(&model, &obs, &exp, &grid, 1021);
    let mut outside = 0;
    for g in 0..grid.len() {
        for k in 0..2 {
            outside += !(b.lo[g][k] <= a.mean[g][k] && a.mean[g][k] <= b.hi[g][k]) as usize;
        }
    }
    let last_obs = exp.obs_times.iter().copied().fold(0.0, f64::max);
    let width = |band: &Band, keep: &dyn Fn(f64) -> bool| {
        let w: Vec<f64> = grid
            .iter()
            .enumerate()
            .filter(|(_, &t)| keep(t))
            .flat_map(|(g, _)| (0..2).map(move |k| band.hi[g][k] - band.lo[g][k]))
            .collect();
        w.iter().sum::<f64>() / w.len() as f64
    };
    let observed = width(&a, &|t| t >= exp.obs_times[0] && t <= last_obs);
    let after = width(&a, &|t| t > last_obs);
    report(
        "lotka-volterra smoother is self-consistent",
        outside == 0 && after > observed,
        format!(
            "cap {}, rates x{}; {outside} of {} grid values outside the other seed's 90% band; mean band width {observed:.2} while observed, {after:.2} after t = {last_obs}",
            exp.cap,
            exp.rate_scale,
            2 * grid.len()
        ),
        started,
    );
}
