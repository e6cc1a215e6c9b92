//! The blocked Gibbs kernel for MJP paths given observations.
//!
//! One sweep draws the thinned Poisson events given the current path,
//! merges them with the real jumps into a candidate grid `W`, samples new
//! states on the grid with FFBS under `B = I + A / omega`, and drops the
//! self-transitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ffbs::{ConstantSteps, FfbsWorkspace};
use crate::mjp::{
    gillespie_sample, InitialDistribution, RateMatrix, SufficientStats, TimeInterval, Trajectory,
};
use crate::uniformization::{
    augment, subordinated_transition_matrix, thin, virtual_jumps_unchecked, OmegaMultiplier,
    UniformizedPath,
};

/// A likelihood window `[start, end)`, or `[start, end]` when `closed`.
///
/// Only the last window of an interval is closed, so an observation at
/// `t_end` has an owner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub closed: bool,
}

impl Window {
    pub fn half_open(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            closed: false,
        }
    }

    pub fn closed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            closed: true,
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Index range of the sorted `times` that fall in the window.
    pub fn range_in(&self, times: &[f64]) -> std::ops::Range<usize> {
        let lo = times.partition_point(|&t| t < self.start);
        let hi = if self.closed {
            times.partition_point(|&t| t <= self.end)
        } else {
            times.partition_point(|&t| t < self.end)
        };
        lo..hi.max(lo)
    }
}

/// Per-window log-likelihoods `log p(X in window | S(t) = s on the window)`.
///
/// Implementations must be additive over window splits.
pub trait ObservationModel {
    fn n_states(&self) -> usize;

    fn window_log_likelihood(&self, state: usize, window: Window) -> f64;

    /// Writes the log-likelihood of every state into `out`.
    fn fill_window(&self, window: Window, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = self.window_log_likelihood(s, window);
        }
    }
}

/// The empty observation set.
#[derive(Debug, Clone, Copy)]
pub struct NoObservations {
    pub n_states: usize,
}

impl ObservationModel for NoObservations {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn window_log_likelihood(&self, _state: usize, _window: Window) -> f64 {
        0.0
    }

    fn fill_window(&self, _window: Window, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Noisy snapshots of the state at fixed times.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObservations {
    times: Vec<f64>,
    // log p(x_j | s), row-major by observation
    log_lik: Vec<f64>,
    n_states: usize,
}

impl DiscreteObservations {
    /// One log-likelihood vector over states per observation time.
    pub fn from_log_likelihoods(times: Vec<f64>, log_liks: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != log_liks.len() {
            return Err(Error::InvalidObservations(
                "one likelihood vector per time is required".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] <= w[1])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidObservations(
                "observation times must be finite and sorted".into(),
            ));
        }
        let n_states = log_liks.first().map_or(0, |v| v.len());
        let mut log_lik = Vec::with_capacity(times.len() * n_states);
        for (j, v) in log_liks.iter().enumerate() {
            if v.len() != n_states {
                return Err(Error::InvalidObservations(format!(
                    "observation {j} has the wrong length"
                )));
            }
            if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(Error::InvalidObservations(format!(
                    "observation {j} has NaN or +inf entries"
                )));
            }
            if v.iter().all(|x| *x == f64::NEG_INFINITY) {
                return Err(Error::InvalidObservations(format!(
                    "observation {j} is impossible in every state"
                )));
            }
            log_lik.extend_from_slice(v);
        }
        Ok(Self {
            times,
            log_lik,
            n_states,
        })
    }

    /// Exact observations of the state.
    pub fn noiseless(times: Vec<f64>, states: &[usize], n_states: usize) -> Result<Self> {
        let liks = states
            .iter()
            .map(|&x| {
                if x >= n_states {
                    return Err(Error::InvalidObservations(format!(
                        "state {x} out of range"
                    )));
                }
                Ok((0..n_states)
                    .map(|s| if s == x { 0.0 } else { f64::NEG_INFINITY })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut obs = Self::from_log_likelihoods(times, liks)?;
        obs.n_states = n_states;
        Ok(obs)
    }

    /// Observations through an emission table `emission[x][s] = p(x | s)`.
    pub fn with_emission(times: Vec<f64>, values: &[usize], emission: &[Vec<f64>]) -> Result<Self> {
        let liks = values
            .iter()
            .map(|&x| {
                let row = emission.get(x).ok_or_else(|| {
                    Error::InvalidObservations(format!("value {x} has no emission row"))
                })?;
                Ok(row.iter().map(|p| p.ln()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_log_likelihoods(times, liks)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `log p(x_j | s)` for each state.
    pub fn log_likelihoods(&self, j: usize) -> &[f64] {
        &self.log_lik[j * self.n_states..(j + 1) * self.n_states]
    }
}

impl ObservationModel for DiscreteObservations {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn window_log_likelihood(&self, state: usize, window: Window) -> f64 {
        window
            .range_in(&self.times)
            .map(|j| self.log_lik[j * self.n_states + state])
            .sum()
    }

    fn fill_window(&self, window: Window, out: &mut [f64]) {
        out.fill(0.0);
        for j in window.range_in(&self.times) {
            for (o, l) in out.iter_mut().zip(self.log_likelihoods(j)) {
                *o += l;
            }
        }
    }
}

/// Log-likelihood of a whole path: the sum over its constant pieces.
pub fn trajectory_log_likelihood<O: ObservationModel + ?Sized>(traj: &Trajectory, obs: &O) -> f64 {
    let end = traj.interval().end();
    let mut total = 0.0;
    let mut segs = traj.segments().peekable();
    while let Some(seg) = segs.next() {
        let w = if segs.peek().is_none() || seg.end >= end {
            Window::closed(seg.start, seg.end)
        } else {
            Window::half_open(seg.start, seg.end)
        };
        total += obs.window_log_likelihood(seg.state, w);
    }
    total
}

/// Settings for a single MJP chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub omega_multiplier: OmegaMultiplier,
    pub n_burnin: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Retain full paths in addition to their sufficient statistics.
    pub keep_paths: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            omega_multiplier: OmegaMultiplier::default(),
            n_burnin: 1000,
            n_samples: 10_000,
            seed: 0,
            keep_paths: false,
        }
    }
}

/// A reusable Gibbs kernel for a fixed generator.
#[derive(Debug, Clone)]
pub struct MjpGibbs {
    a: RateMatrix,
    pi0: InitialDistribution,
    omega: f64,
    b: nalgebra::DMatrix<f64>,
    ws: FfbsWorkspace,
    loglik: Vec<f64>,
}

impl MjpGibbs {
    /// Requires `omega > max_s |A_s|`.
    pub fn new(a: RateMatrix, pi0: InitialDistribution, omega: f64) -> Result<Self> {
        let max_rate = a.max_exit_rate();
        if !(omega > max_rate) {
            return Err(Error::DominatingRate { omega, max_rate });
        }
        Self::new_unchecked(a, pi0, omega)
    }

    /// Accepts `omega == max_s |A_s|`, for which the kernel is not
    /// irreducible. Only useful for demonstrating that failure.
    pub fn allow_degenerate(a: RateMatrix, pi0: InitialDistribution, omega: f64) -> Result<Self> {
        Self::new_unchecked(a, pi0, omega)
    }

    fn new_unchecked(a: RateMatrix, pi0: InitialDistribution, omega: f64) -> Result<Self> {
        if a.n_states() != pi0.n_states() {
            return Err(Error::InvalidModel(
                "generator and pi0 dimensions differ".into(),
            ));
        }
        let b = subordinated_transition_matrix(&a, omega)?;
        Ok(Self {
            a,
            pi0,
            omega,
            b,
            ws: FfbsWorkspace::new(),
            loglik: Vec::new(),
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn generator(&self) -> &RateMatrix {
        &self.a
    }

    /// One sweep: virtual jumps, FFBS over the merged grid, thinning.
    pub fn sweep<O, R>(&mut self, traj: &Trajectory, obs: &O, rng: &mut R) -> Result<Trajectory>
    where
        O: ObservationModel + ?Sized,
        R: Rng + ?Sized,
    {
        let grid = self.augmented(traj, rng)?;
        self.resample_grid(grid, obs, rng)
    }

    pub(crate) fn augmented<R: Rng + ?Sized>(
        &self,
        traj: &Trajectory,
        rng: &mut R,
    ) -> Result<UniformizedPath> {
        let virt = virtual_jumps_unchecked(traj, &self.a, self.omega, rng);
        augment(traj, &virt, self.omega)
    }

    fn resample_grid<O, R>(
        &mut self,
        mut grid: UniformizedPath,
        obs: &O,
        rng: &mut R,
    ) -> Result<Trajectory>
    where
        O: ObservationModel + ?Sized,
        R: Rng + ?Sized,
    {
        let n = self.a.n_states();
        let steps = grid.times.len();
        fill_grid_log_likelihoods(&grid.times, grid.interval, obs, n, &mut self.loglik);
        let sample = self.ws.sample(
            self.pi0.probs(),
            &ConstantSteps {
                matrix: &self.b,
                steps,
            },
            &self.loglik,
            rng,
        )?;
        grid.v0 = sample.states[0];
        grid.states.copy_from_slice(&sample.states[1..]);
        Ok(thin(&grid))
    }
}

/// Fills the `(|W| + 1) x n` window log-likelihood table for grid `times`.
pub(crate) fn fill_grid_log_likelihoods<O: ObservationModel + ?Sized>(
    times: &[f64],
    interval: TimeInterval,
    obs: &O,
    n: usize,
    out: &mut Vec<f64>,
) {
    let windows = times.len() + 1;
    out.clear();
    out.resize(windows * n, 0.0);
    for i in 0..windows {
        let start = if i == 0 {
            interval.start()
        } else {
            times[i - 1]
        };
        let w = if i == times.len() {
            Window::closed(start, interval.end())
        } else {
            Window::half_open(start, times[i])
        };
        obs.fill_window(w, &mut out[i * n..(i + 1) * n]);
    }
}

/// One blocked Gibbs sweep targeting `p(s0, S, T | X)` under `a`.
pub fn gibbs_kernel<O, R>(
    traj: &Trajectory,
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    omega: f64,
    rng: &mut R,
) -> Result<Trajectory>
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    MjpGibbs::new(a.clone(), pi0.clone(), omega)?.sweep(traj, obs, rng)
}

/// [`gibbs_kernel`] without the `omega > max_s |A_s|` guard.
pub fn gibbs_kernel_allow_degenerate<O, R>(
    traj: &Trajectory,
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    omega: f64,
    rng: &mut R,
) -> Result<Trajectory>
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    MjpGibbs::allow_degenerate(a.clone(), pi0.clone(), omega)?.sweep(traj, obs, rng)
}

/// A starting path drawn from the prior.
///
/// Up to 100 prior draws are tried and the first with nonzero observation
/// likelihood is returned; otherwise the last draw is used as is.
pub fn initial_trajectory<O, R>(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    interval: TimeInterval,
    rng: &mut R,
) -> Trajectory
where
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut traj = gillespie_sample(a, pi0, interval, rng);
    for _ in 1..100 {
        if trajectory_log_likelihood(&traj, obs) > f64::NEG_INFINITY {
            break;
        }
        traj = gillespie_sample(a, pi0, interval, rng);
    }
    traj
}

/// Post-burn-in output of [`run_chain`].
#[derive(Debug, Clone, Default)]
pub struct ChainOutput {
    pub stats: Vec<SufficientStats>,
    pub paths: Vec<Trajectory>,
}

/// Runs `n_burnin + n_samples` sweeps from `init`, calling `on_sample` with
/// every post-burn-in path.
pub fn run_chain_with<O, F>(
    init: &Trajectory,
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    config: &GibbsConfig,
    mut on_sample: F,
) -> Result<()>
where
    O: ObservationModel + ?Sized,
    F: FnMut(usize, &Trajectory),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let omega = config.omega_multiplier.omega(a);
    let mut kernel = MjpGibbs::new(a.clone(), pi0.clone(), omega)?;
    let mut traj = init.clone();
    for i in 0..config.n_burnin + config.n_samples {
        traj = kernel.sweep(&traj, obs, &mut rng)?;
        if i >= config.n_burnin {
            on_sample(i - config.n_burnin, &traj);
        }
    }
    Ok(())
}

/// Runs a chain and collects sufficient statistics (and paths, if asked).
pub fn run_chain<O: ObservationModel + ?Sized>(
    init: &Trajectory,
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    config: &GibbsConfig,
) -> Result<ChainOutput> {
    let n = a.n_states();
    let mut out = ChainOutput::default();
    run_chain_with(init, a, pi0, obs, config, |_, traj| {
        out.stats.push(SufficientStats::from_trajectory(traj, n));
        if config.keep_paths {
            out.paths.push(traj.clone());
        }
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn sym2() -> RateMatrix {
        RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn window_ranges() {
        let times = [0.0, 1.0, 1.0, 2.0, 3.0];
        assert_eq!(Window::half_open(1.0, 3.0).range_in(&times), 1..4);
        assert_eq!(Window::closed(1.0, 3.0).range_in(&times), 1..5);
        assert_eq!(Window::half_open(0.0, 0.5).range_in(&times), 0..1);
    }

    #[test]
    fn discrete_observation_additivity() {
        let obs = DiscreteObservations::with_emission(
            vec![0.5, 1.0, 2.5],
            &[0, 1, 1],
            &[vec![0.9, 0.2], vec![0.1, 0.8]],
        )
        .unwrap();
        for s in 0..2 {
            let whole = obs.window_log_likelihood(s, Window::half_open(0.0, 3.0));
            let split = obs.window_log_likelihood(s, Window::half_open(0.0, 1.0))
                + obs.window_log_likelihood(s, Window::half_open(1.0, 3.0));
            assert!((whole - split).abs() < 1e-15);
        }
    }

    #[test]
    fn omega_guard() {
        let traj = Trajectory::constant(0, iv(0.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = NoObservations { n_states: 2 };
        let pi0 = InitialDistribution::uniform(2);
        assert!(gibbs_kernel(&traj, &sym2(), &pi0, &obs, 1.0, &mut rng).is_err());
        assert!(gibbs_kernel(&traj, &sym2(), &pi0, &obs, 1.5, &mut rng).is_ok());
    }

    #[test]
    fn empty_chain_and_determinism() {
        let pi0 = InitialDistribution::uniform(2);
        let obs = NoObservations { n_states: 2 };
        let init = Trajectory::constant(0, iv(0.0, 5.0));
        let cfg = GibbsConfig {
            n_burnin: 3,
            n_samples: 0,
            ..Default::default()
        };
        assert!(run_chain(&init, &sym2(), &pi0, &obs, &cfg)
            .unwrap()
            .stats
            .is_empty());
        let cfg = GibbsConfig {
            n_burnin: 10,
            n_samples: 50,
            seed: 9,
            ..Default::default()
        };
        let a = run_chain(&init, &sym2(), &pi0, &obs, &cfg).unwrap();
        let b = run_chain(&init, &sym2(), &pi0, &obs, &cfg).unwrap();
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn deterministic_pi0_fixes_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi0 = InitialDistribution::point_mass(2, 1);
        let t = initial_trajectory(
            &sym2(),
            &pi0,
            &NoObservations { n_states: 2 },
            iv(0.0, 3.0),
            &mut rng,
        );
        assert_eq!(t.initial_state(), 1);
    }

    #[test]
    fn impossible_observation_fails_first_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // contradictory noiseless observations at the same instant
        let obs = DiscreteObservations::noiseless(vec![0.5, 0.5], &[0, 1], 2).unwrap();
        let pi0 = InitialDistribution::uniform(2);
        let init = initial_trajectory(&sym2(), &pi0, &obs, iv(0.0, 1.0), &mut rng);
        let err = gibbs_kernel(&init, &sym2(), &pi0, &obs, 2.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::ImpossibleData { .. }));
    }
}
