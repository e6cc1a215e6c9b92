//! Markov-modulated Poisson processes.
//!
//! Events arrive as a Poisson process whose rate is `lambda[S(t)]` for a
//! latent MJP `S`. In the Gibbs sampler the events act as a continuous
//! observation: a window of length `d` with `c` events in state `s`
//! contributes `c log(lambda_s) - lambda_s d`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayes::{
    mh_rate_update, sample_gamma_rate, sample_rate_prior, InitialDistMode, RatePrior,
};
use crate::error::{Error, Result};
use crate::gibbs::{initial_trajectory, GibbsConfig, MjpGibbs, ObservationModel, Window};
use crate::mjp::{
    format_time, gillespie_sample, InitialDistribution, RateMatrix, TimeInterval, Trajectory,
};
use crate::util::poisson_points;

/// Latent MJP plus per-state emission rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MmppModel {
    pub a: RateMatrix,
    pub pi0: InitialDistribution,
    pub emission_rates: Vec<f64>,
}

impl MmppModel {
    pub fn new(a: RateMatrix, pi0: InitialDistribution, emission_rates: Vec<f64>) -> Result<Self> {
        if a.n_states() != pi0.n_states() || emission_rates.len() != a.n_states() {
            return Err(Error::InvalidModel(
                "generator, pi0 and emission rates differ in size".into(),
            ));
        }
        if emission_rates.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidModel(
                "emission rates must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            a,
            pi0,
            emission_rates,
        })
    }

    pub fn n_states(&self) -> usize {
        self.a.n_states()
    }
}

/// Sorted event times of the output process.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoissonObservations {
    event_times: Vec<f64>,
}

impl PoissonObservations {
    pub fn new(event_times: Vec<f64>) -> Result<Self> {
        if event_times.iter().any(|t| !t.is_finite()) || event_times.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidObservations(
                "event times must be finite and sorted".into(),
            ));
        }
        Ok(Self { event_times })
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    pub fn count_in(&self, window: Window) -> usize {
        window.range_in(&self.event_times).len()
    }

    /// Reads a single-column `time` CSV; times must be sorted ascending.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "time" {
            return Err(Error::InvalidObservations(
                "expected a single `time` column".into(),
            ));
        }
        let mut times = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let t: f64 = rec[0]
                .parse()
                .map_err(|e| Error::InvalidObservations(format!("bad time {:?}: {e}", &rec[0])))?;
            times.push(t);
        }
        Self::new(times)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["time"])?;
        for &t in &self.event_times {
            w.write_record([format_time(t)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `|O_i| log(lambda_s) - lambda_s (b - a)`, with `0 log 0 = 0`.
pub fn mmpp_interval_log_likelihood(
    state: usize,
    window: Window,
    obs: &PoissonObservations,
    rates: &[f64],
) -> f64 {
    count_log_likelihood(obs.count_in(window), rates[state], window.length())
}

#[inline]
fn count_log_likelihood(count: usize, rate: f64, length: f64) -> f64 {
    if rate == 0.0 {
        return if count == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    count as f64 * rate.ln() - rate * length
}

/// Event observations paired with emission rates, usable by the Gibbs
/// kernel.
#[derive(Debug, Clone, Copy)]
pub struct MmppLikelihood<'a> {
    pub events: &'a PoissonObservations,
    pub rates: &'a [f64],
}

impl ObservationModel for MmppLikelihood<'_> {
    fn n_states(&self) -> usize {
        self.rates.len()
    }

    fn window_log_likelihood(&self, state: usize, window: Window) -> f64 {
        mmpp_interval_log_likelihood(state, window, self.events, self.rates)
    }

    fn fill_window(&self, window: Window, out: &mut [f64]) {
        let count = self.events.count_in(window);
        let len = window.length();
        for (o, &rate) in out.iter_mut().zip(self.rates) {
            *o = count_log_likelihood(count, rate, len);
        }
    }
}

/// Latent path by Gillespie, then Poisson events on each constant piece.
pub fn mmpp_simulate<R: Rng + ?Sized>(
    model: &MmppModel,
    interval: TimeInterval,
    rng: &mut R,
) -> (Trajectory, PoissonObservations) {
    let traj = gillespie_sample(&model.a, &model.pi0, interval, rng);
    let mut events = Vec::new();
    for seg in traj.segments() {
        poisson_points(
            rng,
            model.emission_rates[seg.state],
            seg.start,
            seg.end,
            &mut events,
        );
    }
    (
        traj,
        PoissonObservations {
            event_times: events,
        },
    )
}

/// Independent gamma priors `(shape, rate)` on the emission rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionPrior {
    pub shapes: Vec<f64>,
    pub rates: Vec<f64>,
}

impl EmissionPrior {
    pub fn new(shapes: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if shapes.len() != rates.len()
            || shapes
                .iter()
                .chain(&rates)
                .any(|x| !(x.is_finite() && *x > 0.0))
        {
            return Err(Error::InvalidConfig(
                "emission prior needs matching positive shapes and rates".into(),
            ));
        }
        Ok(Self { shapes, rates })
    }

    /// Shape `s + 1` for state `s`, unit scale, which breaks the label
    /// symmetry between states.
    pub fn increasing(n_states: usize) -> Self {
        Self {
            shapes: (1..=n_states).map(|s| s as f64).collect(),
            rates: vec![1.0; n_states],
        }
    }
}

/// Number of events that fall in each state's segments.
pub fn events_per_state(traj: &Trajectory, obs: &PoissonObservations, n_states: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_states];
    let end = traj.interval().end();
    for seg in traj.segments() {
        let w = if seg.end >= end {
            Window::closed(seg.start, seg.end)
        } else {
            Window::half_open(seg.start, seg.end)
        };
        counts[seg.state] += obs.count_in(w) as u64;
    }
    counts
}

/// `lambda_s ~ Gamma(shape_s + events in s, rate_s + dwell in s)`.
pub fn sample_emission_posterior<R: Rng + ?Sized>(
    traj: &Trajectory,
    obs: &PoissonObservations,
    prior: &EmissionPrior,
    rng: &mut R,
) -> Vec<f64> {
    let n = prior.shapes.len();
    let counts = events_per_state(traj, obs, n);
    let mut dwell = vec![0.0; n];
    for seg in traj.segments() {
        dwell[seg.state] += seg.duration();
    }
    (0..n)
        .map(|s| {
            sample_gamma_rate(
                rng,
                prior.shapes[s] + counts[s] as f64,
                prior.rates[s] + dwell[s],
            )
        })
        .collect()
}

/// Joint posterior over `(A, lambda, path)` for an MMPP with fixed `pi_0`.
///
/// Each sweep runs the path kernel under the current parameters, then
/// redraws `A` and `lambda` given the path.
#[allow(clippy::too_many_arguments)]
pub fn mmpp_bayes_chain_with<F>(
    obs: &PoissonObservations,
    interval: TimeInterval,
    pi0: &InitialDistribution,
    rate_prior: &RatePrior,
    emission_prior: &EmissionPrior,
    config: &GibbsConfig,
    mut on_sample: F,
) -> Result<()>
where
    F: FnMut(usize, &RateMatrix, &[f64], &Trajectory),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = rate_prior.n_states();
    let mut a = sample_rate_prior(rate_prior, &mut rng);
    let mut rates: Vec<f64> = (0..n)
        .map(|s| sample_gamma_rate(&mut rng, emission_prior.shapes[s], emission_prior.rates[s]))
        .collect();
    let mut traj = initial_trajectory(
        &a,
        pi0,
        &MmppLikelihood {
            events: obs,
            rates: &rates,
        },
        interval,
        &mut rng,
    );
    let mode = InitialDistMode::Fixed(pi0.clone());
    for i in 0..config.n_burnin + config.n_samples {
        let omega = config.omega_multiplier.omega(&a);
        let mut kernel = MjpGibbs::new(a.clone(), pi0.clone(), omega)?;
        traj = kernel.sweep(
            &traj,
            &MmppLikelihood {
                events: obs,
                rates: &rates,
            },
            &mut rng,
        )?;
        a = mh_rate_update(&a, &traj, rate_prior, &mode, &mut rng)?.a;
        rates = sample_emission_posterior(&traj, obs, emission_prior, &mut rng);
        if i >= config.n_burnin {
            on_sample(i - config.n_burnin, &a, &rates, &traj);
        }
    }
    Ok(())
}
