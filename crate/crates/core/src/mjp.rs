//! Markov jump process primitives: generators, trajectories, forward
//! simulation, path densities and sufficient statistics.
//!
//! Generators use the **column convention**: `A[(to, from)]` is the rate of
//! jumping from state `from` into state `to`, and every column sums to zero.
//! Distributions evolve as `p_t = exp(A t) p_0` with `p` a column vector.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::util::{sample_categorical, sample_exponential};

const COLUMN_SUM_TOL: f64 = 1e-9;

/// A finite state space `{0, .., n_states - 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    n_states: usize,
}

impl StateSpace {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidModel(
                "state space must have at least one state".into(),
            ));
        }
        Ok(Self { n_states })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn contains(&self, s: usize) -> bool {
        s < self.n_states
    }
}

/// An MJP generator in column convention.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    a: DMatrix<f64>,
}

impl RateMatrix {
    /// Validates `a` and snaps each diagonal entry to minus its column's
    /// off-diagonal sum, so columns sum to zero up to rounding.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidGenerator(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut a = a;
        for from in 0..n {
            let mut off = 0.0;
            for to in 0..n {
                let v = a[(to, from)];
                if !v.is_finite() {
                    return Err(Error::InvalidGenerator(format!(
                        "non-finite entry at ({to}, {from})"
                    )));
                }
                if to != from {
                    if v < 0.0 {
                        return Err(Error::InvalidGenerator(format!(
                            "negative off-diagonal rate {v} at ({to}, {from})"
                        )));
                    }
                    off += v;
                }
            }
            let sum = off + a[(from, from)];
            if sum.abs() > COLUMN_SUM_TOL * off.max(1.0) {
                return Err(Error::InvalidGenerator(format!(
                    "column {from} sums to {sum}, not 0"
                )));
            }
            a[(from, from)] = -off;
        }
        Ok(Self { a })
    }

    /// Builds a generator from its off-diagonal rates `rate(to, from)`.
    pub fn from_off_diagonal(n: usize, mut rate: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for from in 0..n {
            let mut off = 0.0;
            for to in 0..n {
                if to != from {
                    let r = rate(to, from);
                    a[(to, from)] = r;
                    off += r;
                }
            }
            a[(from, from)] = -off;
        }
        Self::new(a)
    }

    /// Builds a generator from row slices, `rows[to][from]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidGenerator(
                "rows must form a square matrix".into(),
            ));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0);
        Self {
            a: DMatrix::zeros(n, n),
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace {
            n_states: self.n_states(),
        }
    }

    /// Rate of jumping from `from` into `to`.
    #[inline]
    pub fn rate(&self, to: usize, from: usize) -> f64 {
        self.a[(to, from)]
    }

    /// Total rate of leaving `s`, `|A_s|`.
    #[inline]
    pub fn exit_rate(&self, s: usize) -> f64 {
        -self.a[(s, s)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n_states())
            .map(|s| self.exit_rate(s))
            .fold(0.0, f64::max)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    /// Rows `[to][from]`, the layout used by model files.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        (0..n)
            .map(|i| (0..n).map(|j| self.a[(i, j)]).collect())
            .collect()
    }

    /// `A p` for a column vector `p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; n];
        for from in 0..n {
            let pf = p[from];
            if pf == 0.0 {
                continue;
            }
            for to in 0..n {
                out[to] += self.a[(to, from)] * pf;
            }
        }
        out
    }
}

/// A closed time interval `[start, end]` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Initial state distribution `pi_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    probs: Vec<f64>,
}

impl InitialDistribution {
    /// Accepts nonnegative weights summing to one within `1e-9`. Vectors off
    /// by more than `1e-12` are renormalized; closer ones are kept as given
    /// so that reloading a saved distribution is exact.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution(
                "empty probability vector".into(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        if (total - 1.0).abs() <= 1e-12 {
            return Ok(Self { probs });
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, s: usize) -> Self {
        assert!(s < n);
        let mut probs = vec![0.0; n];
        probs[s] = 1.0;
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.probs[s]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(rng, &self.probs)
    }
}

/// A constant piece of a trajectory, `[start, end)` spent in `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub state: usize,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// A pure-jump path `(s0, S, T)` on an interval.
///
/// Jump times are strictly increasing and lie in `(t_start, t_end]`, and
/// every jump changes the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    s0: usize,
    times: Vec<f64>,
    states: Vec<usize>,
    interval: TimeInterval,
}

impl Trajectory {
    pub fn new(
        s0: usize,
        times: Vec<f64>,
        states: Vec<usize>,
        interval: TimeInterval,
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} jump times but {} jump states",
                times.len(),
                states.len()
            )));
        }
        let mut prev_t = interval.start();
        let mut prev_s = s0;
        for (i, (&t, &s)) in times.iter().zip(&states).enumerate() {
            if !(t > prev_t) || t > interval.end() {
                return Err(Error::InvalidTrajectory(format!(
                    "jump {i} at time {t} is not strictly after {prev_t} or leaves the interval"
                )));
            }
            if s == prev_s {
                return Err(Error::InvalidTrajectory(format!(
                    "jump {i} at time {t} is a self-transition"
                )));
            }
            prev_t = t;
            prev_s = s;
        }
        Ok(Self {
            s0,
            times,
            states,
            interval,
        })
    }

    /// A path that stays in `s0` for the whole interval.
    pub fn constant(s0: usize, interval: TimeInterval) -> Self {
        Self {
            s0,
            times: vec![],
            states: vec![],
            interval,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.s0
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_states(&self) -> &[usize] {
        &self.states
    }

    pub fn interval(&self) -> TimeInterval {
        self.interval
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn final_state(&self) -> usize {
        self.states.last().copied().unwrap_or(self.s0)
    }

    /// The state at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            self.s0
        } else {
            self.states[idx - 1]
        }
    }

    /// Constant pieces covering the interval, in order. A jump exactly at
    /// `t_end` yields a final zero-length segment, which is skipped.
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.times.len();
        (0..=n).filter_map(move |i| {
            let start = if i == 0 {
                self.interval.start()
            } else {
                self.times[i - 1]
            };
            let end = if i == n {
                self.interval.end()
            } else {
                self.times[i]
            };
            let state = if i == 0 { self.s0 } else { self.states[i - 1] };
            (end > start).then_some(Segment { start, end, state })
        })
    }

    pub fn max_state(&self) -> usize {
        self.states.iter().copied().fold(self.s0, usize::max)
    }

    /// Writes `time,state` CSV: the first row is `(t_start, s0)`, then one
    /// row per jump. Times carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["time", "state"])?;
        w.write_record([format_time(self.interval.start()), self.s0.to_string()])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_record([format_time(*t), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`Trajectory::write_csv`]. The file does not
    /// record `t_end`, so it is supplied by the caller.
    pub fn read_csv<R: Read>(reader: R, t_end: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "state" {
            return Err(Error::InvalidTrajectory(
                "expected header `time,state`".into(),
            ));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let t: f64 = rec[0]
                .parse()
                .map_err(|e| Error::InvalidTrajectory(format!("bad time {:?}: {e}", &rec[0])))?;
            let s: usize = rec[1]
                .parse()
                .map_err(|e| Error::InvalidTrajectory(format!("bad state {:?}: {e}", &rec[1])))?;
            rows.push((t, s));
        }
        let Some(&(t0, s0)) = rows.first() else {
            return Err(Error::InvalidTrajectory("missing initial row".into()));
        };
        let interval = TimeInterval::new(t0, t_end)?;
        let (times, states) = rows[1..].iter().copied().unzip();
        Self::new(s0, times, states, interval)
    }
}

pub(crate) fn format_time(t: f64) -> String {
    format!("{t:.16e}")
}

/// Dwell times and transition counts of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    dwell: Vec<f64>,
    // counts[to * n + from]
    counts: Vec<u64>,
}

impl SufficientStats {
    pub fn zeros(n: usize) -> Self {
        Self {
            dwell: vec![0.0; n],
            counts: vec![0; n * n],
        }
    }

    pub fn from_trajectory(traj: &Trajectory, n_states: usize) -> Self {
        let mut stats = Self::zeros(n_states);
        stats.accumulate(traj);
        stats
    }

    /// Adds the dwell times and transitions of `traj`.
    pub fn accumulate(&mut self, traj: &Trajectory) {
        let n = self.n_states();
        for seg in traj.segments() {
            self.dwell[seg.state] += seg.duration();
        }
        let mut prev = traj.initial_state();
        for &s in traj.jump_states() {
            self.counts[s * n + prev] += 1;
            prev = s;
        }
    }

    pub fn n_states(&self) -> usize {
        self.dwell.len()
    }

    pub fn dwell_time(&self, s: usize) -> f64 {
        self.dwell[s]
    }

    pub fn dwell_times(&self) -> &[f64] {
        &self.dwell
    }

    pub fn transitions(&self, from: usize, to: usize) -> u64 {
        self.counts[to * self.n_states() + from]
    }

    /// Number of jumps out of `s`.
    pub fn exits(&self, s: usize) -> u64 {
        (0..self.n_states()).map(|to| self.transitions(s, to)).sum()
    }

    pub fn total_transitions(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_time(&self) -> f64 {
        self.dwell.iter().sum()
    }

    pub(crate) fn add_dwell(&mut self, s: usize, dt: f64) {
        self.dwell[s] += dt;
    }

    pub(crate) fn add_transition(&mut self, from: usize, to: usize) {
        let n = self.n_states();
        self.counts[to * n + from] += 1;
    }

    /// Flattened statistics: dwell times, then off-diagonal counts in
    /// `(from, to)` row-major order.
    pub fn to_vec(&self) -> Vec<f64> {
        let n = self.n_states();
        let mut v = self.dwell.clone();
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    v.push(self.transitions(from, to) as f64);
                }
            }
        }
        v
    }

    /// Names matching [`SufficientStats::to_vec`].
    pub fn labels(n: usize) -> Vec<String> {
        let mut v: Vec<String> = (0..n).map(|s| format!("dwell_{s}")).collect();
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    v.push(format!("n_{from}_{to}"));
                }
            }
        }
        v
    }
}

/// Forward simulation of an MJP path by competing exponential holding
/// times.
pub fn gillespie_sample<R: Rng + ?Sized>(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    interval: TimeInterval,
    rng: &mut R,
) -> Trajectory {
    assert_eq!(
        a.n_states(),
        pi0.n_states(),
        "generator and pi0 dimensions differ"
    );
    let n = a.n_states();
    let s0 = pi0.sample(rng);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut t = interval.start();
    let mut s = s0;
    let mut weights = vec![0.0; n];
    loop {
        let rate = a.exit_rate(s);
        let z = sample_exponential(rng, rate);
        if t + z > interval.end() {
            break;
        }
        t += z;
        for (to, w) in weights.iter_mut().enumerate() {
            *w = if to == s { 0.0 } else { a.rate(to, s) };
        }
        s = sample_categorical(rng, &weights);
        times.push(t);
        states.push(s);
    }
    Trajectory::new(s0, times, states, interval).expect("gillespie produces valid paths")
}

/// Log density of a path: initial probability, the rate of every jump and
/// the survival factor `exp(-int |A_{S(t)}| dt)` in closed form.
pub fn path_log_density(traj: &Trajectory, a: &RateMatrix, pi0: &InitialDistribution) -> f64 {
    let p0 = pi0.prob(traj.initial_state());
    if p0 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut logp = p0.ln();
    let mut prev = traj.initial_state();
    for &s in traj.jump_states() {
        let r = a.rate(s, prev);
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        logp += r.ln();
        prev = s;
    }
    for seg in traj.segments() {
        logp -= a.exit_rate(seg.state) * seg.duration();
    }
    logp
}

pub fn sufficient_stats(traj: &Trajectory, n_states: usize) -> SufficientStats {
    SufficientStats::from_trajectory(traj, n_states)
}
