mod common;

use common::{iv, random_generator, rng, serial, sym2, with_max_exit};
use mjpgibbs::diagnostics::bridge_marginal;
use mjpgibbs::diagnostics::stats::{batch_means, chi_square_gof, linear_fit};
use mjpgibbs::experiments::median_sweep_seconds;
use mjpgibbs::gibbs::gibbs_kernel_allow_degenerate;
use mjpgibbs::uniformization::sample_virtual_jumps;
use mjpgibbs::{
    gibbs_kernel, gillespie_sample, DiscreteObservations, Error, InitialDistribution, MjpGibbs,
    NoObservations, ObservationModel, Trajectory, Window,
};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

#[test]
fn symmetric_two_state_dwell_is_half() {
    let _g = serial();
    let a = sym2(1.0);
    let pi0 = InitialDistribution::uniform(2);
    let mut kernel = MjpGibbs::new(a, pi0, 2.0).unwrap();
    let mut r = rng(31);
    let mut traj = Trajectory::constant(0, iv(0.0, 1.0));
    let obs = NoObservations { n_states: 2 };
    let mut frac = Vec::new();
    for i in 0..11_000 {
        traj = kernel.sweep(&traj, &obs, &mut r).unwrap();
        if i >= 1000 {
            frac.push(
                traj.segments()
                    .filter(|s| s.state == 0)
                    .map(|s| s.duration())
                    .sum::<f64>(),
            );
        }
    }
    let (mean, se) = batch_means(&frac, 50);
    assert!((mean - 0.5).abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn bridge_midpoint_matches_exact_bridge() {
    let _g = serial();
    let mut r = rng(32);
    let a = with_max_exit(&random_generator(3, 0.2, 1.0, &mut r), 1.5);
    let pi0 = InitialDistribution::uniform(3);
    let obs = DiscreteObservations::noiseless(vec![0.0, 2.0], &[0, 2], 3).unwrap();
    let mut kernel = MjpGibbs::new(a.clone(), pi0, 2.0 * a.max_exit_rate()).unwrap();
    let mut traj = Trajectory::new(0, vec![1.0], vec![2], iv(0.0, 2.0)).unwrap();
    let mut ind = vec![Vec::new(); 3];
    for i in 0..21_000 {
        traj = kernel.sweep(&traj, &obs, &mut r).unwrap();
        assert_eq!(traj.initial_state(), 0);
        assert_eq!(traj.final_state(), 2);
        if i >= 1000 {
            let s = traj.state_at(1.0);
            for (x, v) in ind.iter_mut().enumerate() {
                v.push((s == x) as u8 as f64);
            }
        }
    }
    let exact = bridge_marginal(&a, 0, 2, 2.0, 1.0);
    for (v, p) in ind.iter().zip(&exact) {
        let (mean, se) = batch_means(v, 50);
        assert!(
            (mean - p).abs() < 3.0 * se.max(1e-3),
            "{mean} vs {p} (se {se})"
        );
    }
}

#[test]
fn grid_size_after_warm_sweeps_is_poisson() {
    let _g = serial();
    let a = sym2(1.0);
    let pi0 = InitialDistribution::uniform(2);
    let omega = 3.0;
    let t_end = 2.0;
    let mut kernel = MjpGibbs::new(a.clone(), pi0.clone(), omega).unwrap();
    let mut r = rng(33);
    let obs = NoObservations { n_states: 2 };
    let mut traj = gillespie_sample(&a, &pi0, iv(0.0, t_end), &mut r);
    for _ in 0..200 {
        traj = kernel.sweep(&traj, &obs, &mut r).unwrap();
    }
    let cells = 20;
    let mut counts = vec![0u64; cells];
    for _ in 0..20_000 {
        traj = kernel.sweep(&traj, &obs, &mut r).unwrap();
        let u = sample_virtual_jumps(&traj, &a, omega, &mut r).unwrap();
        counts[(traj.n_jumps() + u.len()).min(cells - 1)] += 1;
    }
    let pois = Poisson::new(omega * t_end).unwrap();
    let mut probs: Vec<f64> = (0..cells as u64 - 1).map(|k| pois.pmf(k)).collect();
    probs.push(1.0 - pois.cdf(cells as u64 - 2));
    let test = chi_square_gof(&counts, &probs);
    assert!(test.p_value > 0.001, "{test:?}");
}

#[test]
fn dominating_rate_is_enforced() {
    let _g = serial();
    let a = sym2(1.0);
    let pi0 = InitialDistribution::uniform(2);
    let traj = Trajectory::constant(0, iv(0.0, 1.0));
    let obs = NoObservations { n_states: 2 };
    let err = gibbs_kernel(&traj, &a, &pi0, &obs, 1.0, &mut rng(34)).unwrap_err();
    assert!(matches!(err, Error::DominatingRate { .. }));
}

#[test]
fn equal_rate_kernel_locks_jump_times() {
    let _g = serial();
    let a = sym2(1.0);
    let pi0 = InitialDistribution::uniform(2);
    let mut r = rng(35);
    let obs = NoObservations { n_states: 2 };
    let init = Trajectory::new(0, vec![0.3, 0.7], vec![1, 0], iv(0.0, 1.0)).unwrap();
    let mut traj = init.clone();
    for _ in 0..100 {
        traj = gibbs_kernel_allow_degenerate(&traj, &a, &pi0, &obs, 1.0, &mut r).unwrap();
        assert_eq!(traj.jump_times(), init.jump_times());
    }
}

#[test]
fn observation_change_touches_only_covering_windows() {
    let _g = serial();
    let base = DiscreteObservations::from_log_likelihoods(
        vec![0.5, 1.0, 2.5],
        vec![vec![-0.1, -2.0], vec![-1.0, -0.5], vec![-0.3, -0.9]],
    )
    .unwrap();
    let changed = DiscreteObservations::from_log_likelihoods(
        vec![0.5, 1.0, 2.5],
        vec![vec![-0.1, -2.0], vec![-7.0, -0.01], vec![-0.3, -0.9]],
    )
    .unwrap();
    let edges = [0.0, 0.4, 0.9, 1.0, 1.7, 2.6, 3.0];
    for i in 0..edges.len() - 1 {
        let w = if i == edges.len() - 2 {
            Window::closed(edges[i], edges[i + 1])
        } else {
            Window::half_open(edges[i], edges[i + 1])
        };
        let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
        base.fill_window(w, &mut x);
        changed.fill_window(w, &mut y);
        let covers = w.range_in(base.times()).contains(&1);
        assert_eq!(x != y, covers, "window {i}");
        if !covers {
            assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
        }
    }
}

#[test]
fn sweep_cost_is_linear_in_multiplier() {
    let _g = serial();
    let mut r = rng(36);
    let a = with_max_exit(&random_generator(5, 0.2, 1.0, &mut r), 1.0);
    let pi0 = InitialDistribution::uniform(5);
    let obs = NoObservations { n_states: 5 };
    let interval = iv(0.0, 200.0);
    let ks = [1.5, 2.0, 3.0, 5.0, 10.0];
    let mut secs = Vec::new();
    for &k in &ks {
        let mut kernel = MjpGibbs::new(a.clone(), pi0.clone(), k * a.max_exit_rate()).unwrap();
        let mut traj = gillespie_sample(&a, &pi0, interval, &mut r);
        let mut rr = rng(37);
        secs.push(
            median_sweep_seconds(5, 20, || {
                traj = kernel.sweep(&traj, &obs, &mut rr)?;
                Ok(())
            })
            .unwrap(),
        );
    }
    let (slope, _, r2) = linear_fit(&ks, &secs);
    assert!(slope > 0.0 && r2 > 0.9, "slope {slope}, r2 {r2}, {secs:?}");
}
