//! The stochastic Lotka–Volterra predator–prey model as a two-node cyclic
//! CTBN, truncated at a maximum population size.
//!
//! Node 0 is the prey `x`, node 1 the predator `y`:
//! `x -> x+1` at `alpha x`, `x -> x-1` at `beta x y`, `y -> y+1` at
//! `delta x y`, `y -> y-1` at `gamma y`. Births that would exceed the cap
//! are dropped.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ctbn_simulate_from, ConditionalGenerator, CtbnInitial, CtbnModel, CtbnNode, CtbnObservations,
    CtbnTrajectory,
};
use crate::error::{Error, Result};
use crate::gibbs::DiscreteObservations;
use crate::mjp::{InitialDistribution, TimeInterval};
use crate::util::sample_categorical;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterraRates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LotkaVolterraRates {
    fn default() -> Self {
        Self {
            alpha: 5e-4,
            beta: 1e-4,
            gamma: 5e-4,
            delta: 1e-4,
        }
    }
}

impl LotkaVolterraRates {
    /// All four rates multiplied by `factor`, which speeds the process up
    /// without moving its fixed point `(gamma / delta, alpha / beta)`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            gamma: self.gamma * factor,
            delta: self.delta * factor,
        }
    }
}

/// Two nodes, `prey` and `predator`, each on `{0, .., cap}`, with uniform
/// initial distributions.
pub fn lotka_volterra_model(rates: LotkaVolterraRates, cap: usize) -> Result<CtbnModel> {
    if cap < 1 {
        return Err(Error::InvalidModel(
            "population cap must be at least 1".into(),
        ));
    }
    let LotkaVolterraRates {
        alpha,
        beta,
        gamma,
        delta,
    } = rates;
    if [alpha, beta, gamma, delta]
        .iter()
        .any(|r| !(r.is_finite() && *r >= 0.0))
    {
        return Err(Error::InvalidModel(
            "rates must be finite and nonnegative".into(),
        ));
    }
    let n = cap + 1;
    // birth(v) and death(v) of one species given the other's count `o`
    let build = |birth: &dyn Fn(usize, usize) -> f64, death: &dyn Fn(usize, usize) -> f64| {
        (0..n)
            .map(|o| {
                let mut entries = Vec::with_capacity(2 * n);
                for v in 0..n {
                    if v < cap {
                        entries.push((v + 1, v, birth(v, o)));
                    }
                    if v > 0 {
                        entries.push((v - 1, v, death(v, o)));
                    }
                }
                ConditionalGenerator::from_triplets(n, &entries)
            })
            .collect::<Result<Vec<_>>>()
    };
    let prey = build(&|x, _| alpha * x as f64, &|x, y| beta * (x * y) as f64)?;
    let predator = build(&|y, x| delta * (x * y) as f64, &|y, _| gamma * y as f64)?;
    let nodes = vec![
        CtbnNode::new("prey", n, vec![1], prey),
        CtbnNode::new("predator", n, vec![0], predator),
    ];
    let init = CtbnInitial::Product(vec![InitialDistribution::uniform(n); 2]);
    CtbnModel::new(nodes, init)
}

/// Observation noise `p(x | s) ∝ 1 / (2^|x - s| + 1e-6)` over
/// `x in {0, .., cap}`, as `emission[x][s]`.
pub fn lotka_volterra_emission(cap: usize) -> Vec<Vec<f64>> {
    let n = cap + 1;
    let raw = |x: usize, s: usize| 1.0 / (2f64.powi(x.abs_diff(s) as i32) + 1e-6);
    let norms: Vec<f64> = (0..n).map(|s| (0..n).map(|x| raw(x, s)).sum()).collect();
    (0..n)
        .map(|x| (0..n).map(|s| raw(x, s) / norms[s]).collect())
        .collect()
}

/// A synthetic smoothing problem: a true path started at a known state,
/// observed exactly at `t = 0` and with noise at `obs_times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterraExperiment {
    /// Factor applied to the reference rates; recorded for reproducibility.
    pub rate_scale: f64,
    pub rates: LotkaVolterraRates,
    pub cap: usize,
    pub t_end: f64,
    pub obs_times: Vec<f64>,
    pub initial_state: [usize; 2],
}

impl Default for LotkaVolterraExperiment {
    /// Cap 30 with rates scaled by 10 and time shrunk by 10: 15 noisy
    /// observations every 10 time units on `[0, 225]`, none after 150.
    fn default() -> Self {
        let rate_scale = 10.0;
        Self {
            rate_scale,
            rates: LotkaVolterraRates::default().scaled(rate_scale),
            cap: 30,
            t_end: 225.0,
            obs_times: (1..=15).map(|i| 10.0 * i as f64).collect(),
            initial_state: [12, 6],
        }
    }
}

impl LotkaVolterraExperiment {
    pub fn model(&self) -> Result<CtbnModel> {
        lotka_volterra_model(self.rates, self.cap)
    }

    pub fn interval(&self) -> Result<TimeInterval> {
        TimeInterval::new(0.0, self.t_end)
    }

    /// Simulates the true path and its observations.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<(CtbnModel, CtbnTrajectory, CtbnObservations)> {
        let model = self.model()?;
        let interval = self.interval()?;
        if self.initial_state.iter().any(|&s| s > self.cap) {
            return Err(Error::InvalidConfig("initial state exceeds the cap".into()));
        }
        if self
            .obs_times
            .iter()
            .any(|&t| !(t > 0.0 && t <= self.t_end))
        {
            return Err(Error::InvalidConfig(
                "observation times must lie in (0, t_end]".into(),
            ));
        }
        let truth = ctbn_simulate_from(&model, self.initial_state.to_vec(), interval, rng);
        let emission = lotka_volterra_emission(self.cap);
        let n = self.cap + 1;
        let per_node = (0..2)
            .map(|k| {
                let mut times = vec![0.0];
                let exact: Vec<f64> = (0..n)
                    .map(|s| {
                        if s == self.initial_state[k] {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let mut rows = vec![exact];
                for &t in &self.obs_times {
                    let s = truth.node_path(k).state_at(t);
                    let column: Vec<f64> = (0..n).map(|x| emission[x][s]).collect();
                    let x = sample_categorical(rng, &column);
                    times.push(t);
                    rows.push(emission[x].iter().map(|p| p.ln()).collect());
                }
                DiscreteObservations::from_log_likelihoods(times, rows)
            })
            .collect::<Result<Vec<_>>>()?;
        let obs = CtbnObservations::new(&model, per_node)?;
        Ok((model, truth, obs))
    }
}
