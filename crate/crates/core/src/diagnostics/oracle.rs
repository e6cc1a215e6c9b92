//! Exact reference computations for small problems: smoothed marginals by
//! matrix exponentials, brute-force HMM enumeration and fine-grid
//! discretized posteriors.

use nalgebra::DMatrix;

use super::expm::transition_probabilities;
use crate::error::{Error, Result};
use crate::ffbs::HmmProblem;
use crate::gibbs::{DiscreteObservations, ObservationModel, Window};
use crate::mjp::{InitialDistribution, RateMatrix, TimeInterval};

/// Largest state space the matrix-exponential oracles accept.
pub const ORACLE_MAX_STATES: usize = 16;

fn check_size(a: &RateMatrix) -> Result<()> {
    if a.n_states() > ORACLE_MAX_STATES {
        return Err(Error::InvalidModel(format!(
            "oracle limited to {ORACLE_MAX_STATES} states, got {}",
            a.n_states()
        )));
    }
    Ok(())
}

fn normalize(v: &mut [f64]) -> f64 {
    let c: f64 = v.iter().sum();
    if c > 0.0 {
        v.iter_mut().for_each(|x| *x /= c);
    }
    c
}

fn propagate(p: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for from in 0..n {
        for to in 0..n {
            out[to] += p[(to, from)] * v[from];
        }
    }
    out
}

fn propagate_back(p: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|from| (0..n).map(|to| p[(to, from)] * v[to]).sum())
        .collect()
}

struct Point {
    time: f64,
    // log-likelihood of the observations at this time, if any
    obs: Option<Vec<f64>>,
}

fn event_points(obs: &DiscreteObservations, extra: &[f64]) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    let mut times: Vec<f64> = obs.times().iter().chain(extra).copied().collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    for t in times {
        let mut ll: Option<Vec<f64>> = None;
        for j in Window::closed(t, t).range_in(obs.times()) {
            let v = ll.get_or_insert_with(|| vec![0.0; obs.n_states()]);
            for (x, l) in v.iter_mut().zip(obs.log_likelihoods(j)) {
                *x += l;
            }
        }
        pts.push(Point { time: t, obs: ll });
    }
    pts
}

fn apply_obs(v: &mut [f64], ll: &Option<Vec<f64>>) {
    if let Some(ll) = ll {
        let m = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (x, l) in v.iter_mut().zip(ll) {
            *x *= (l - m).exp();
        }
    }
}

fn obs_shift(ll: &Option<Vec<f64>>) -> f64 {
    ll.as_ref()
        .map_or(0.0, |l| l.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Exact posterior state marginals at `query_times` given discrete
/// observations on `interval`.
pub fn exact_smoothed_marginals(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &DiscreteObservations,
    interval: TimeInterval,
    query_times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_size(a)?;
    if query_times.iter().any(|t| !interval.contains(*t))
        || obs.times().iter().any(|t| !interval.contains(*t))
    {
        return Err(Error::InvalidObservations(
            "times must lie inside the interval".into(),
        ));
    }
    let pts = event_points(obs, query_times);
    let m = pts.len();
    // forward: filtered distributions including observations at each point
    let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut prev_t = interval.start();
    let mut cur = pi0.probs().to_vec();
    for (j, p) in pts.iter().enumerate() {
        cur = propagate(&transition_probabilities(a, p.time - prev_t), &cur);
        apply_obs(&mut cur, &p.obs);
        if normalize(&mut cur) <= 0.0 {
            return Err(Error::ImpossibleData { step: j });
        }
        fwd.push(cur.clone());
        prev_t = p.time;
    }
    // backward: likelihood of later observations given the state at a point
    let n = a.n_states();
    let mut bwd = vec![vec![1.0; n]; m];
    for j in (0..m.saturating_sub(1)).rev() {
        let mut next = bwd[j + 1].clone();
        apply_obs(&mut next, &pts[j + 1].obs);
        let mut b = propagate_back(
            &transition_probabilities(a, pts[j + 1].time - pts[j].time),
            &next,
        );
        normalize(&mut b);
        bwd[j] = b;
    }
    query_times
        .iter()
        .map(|&t| {
            let j = pts
                .iter()
                .position(|p| p.time == t)
                .expect("query time is a point");
            let mut post: Vec<f64> = fwd[j].iter().zip(&bwd[j]).map(|(f, b)| f * b).collect();
            if normalize(&mut post) <= 0.0 {
                return Err(Error::ImpossibleData { step: j });
            }
            Ok(post)
        })
        .collect()
}

/// `log p(X)` for discrete observations, integrating over all paths.
pub fn exact_log_likelihood(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &DiscreteObservations,
    interval: TimeInterval,
) -> Result<f64> {
    check_size(a)?;
    let pts = event_points(obs, &[]);
    let mut prev_t = interval.start();
    let mut cur = pi0.probs().to_vec();
    let mut log_z = 0.0;
    for (j, p) in pts.iter().enumerate() {
        cur = propagate(&transition_probabilities(a, p.time - prev_t), &cur);
        apply_obs(&mut cur, &p.obs);
        let c = normalize(&mut cur);
        if c <= 0.0 {
            return Err(Error::ImpossibleData { step: j });
        }
        log_z += c.ln() + obs_shift(&p.obs);
        prev_t = p.time;
    }
    Ok(log_z)
}

/// `P(S_t = s | S_0 = from, S_total = to)` for every `s`.
pub fn bridge_marginal(a: &RateMatrix, from: usize, to: usize, total: f64, t: f64) -> Vec<f64> {
    let p1 = transition_probabilities(a, t);
    let p2 = transition_probabilities(a, total - t);
    let mut v: Vec<f64> = (0..a.n_states())
        .map(|s| p1[(s, from)] * p2[(to, s)])
        .collect();
    normalize(&mut v);
    v
}

/// Full posterior over state sequences of a small HMM by enumeration.
#[derive(Debug, Clone)]
pub struct EnumeratedPosterior {
    /// Path probabilities indexed by the base-`n` encoding of the path,
    /// first time point least significant.
    pub path_probs: Vec<f64>,
    pub log_marginal: f64,
    pub n_states: usize,
    pub n_points: usize,
}

impl EnumeratedPosterior {
    pub fn encode(&self, path: &[usize]) -> usize {
        path.iter().rev().fold(0, |acc, &s| acc * self.n_states + s)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        (0..self.n_points)
            .map(|_| {
                let s = idx % self.n_states;
                idx /= self.n_states;
                s
            })
            .collect()
    }

    /// Posterior marginal `P(S_t = s | O)`, one row per time point.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_states]; self.n_points];
        for (idx, &p) in self.path_probs.iter().enumerate() {
            for (t, s) in self.decode(idx).into_iter().enumerate() {
                m[t][s] += p;
            }
        }
        m
    }
}

pub fn enumerate_hmm_posterior(problem: &HmmProblem) -> Result<EnumeratedPosterior> {
    let n = problem.n_states();
    let n_points = problem.n_steps() + 1;
    let total = (n as f64).powi(n_points as i32);
    if total > (1u64 << 22) as f64 {
        return Err(Error::InvalidConfig(format!(
            "{total} paths is too many to enumerate"
        )));
    }
    let mut post = EnumeratedPosterior {
        path_probs: vec![0.0; total as usize],
        log_marginal: 0.0,
        n_states: n,
        n_points,
    };
    let mut logs = vec![f64::NEG_INFINITY; total as usize];
    for (idx, slot) in logs.iter_mut().enumerate() {
        let path = post.decode(idx);
        let mut lp = problem.pi0().prob(path[0]).ln() + problem.log_likelihood(0, path[0]);
        for t in 1..n_points {
            lp += problem.transitions()[t - 1][(path[t], path[t - 1])].ln()
                + problem.log_likelihood(t, path[t]);
        }
        *slot = lp;
    }
    let log_marginal = crate::util::log_sum_exp(&logs);
    if log_marginal == f64::NEG_INFINITY {
        return Err(Error::ImpossibleData { step: 0 });
    }
    for (p, l) in post.path_probs.iter_mut().zip(&logs) {
        *p = (l - log_marginal).exp();
    }
    post.log_marginal = log_marginal;
    Ok(post)
}

/// Posterior state marginals on a fine time grid, treating the state as
/// constant within each cell.
#[derive(Debug, Clone)]
pub struct DiscretizedPosterior {
    /// `cells x n_states`.
    pub cell_marginals: DMatrix<f64>,
    pub cell_width: f64,
    pub log_evidence: f64,
}

impl DiscretizedPosterior {
    /// Posterior mean time spent in each state.
    pub fn expected_dwell(&self) -> Vec<f64> {
        self.cell_marginals
            .column_iter()
            .map(|c| c.sum() * self.cell_width)
            .collect()
    }
}

/// Forward-backward over `n_cells` equal cells with exact transition
/// probabilities between cells and per-cell window likelihoods.
pub fn discretized_posterior<O: ObservationModel + ?Sized>(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    obs: &O,
    interval: TimeInterval,
    n_cells: usize,
) -> Result<DiscretizedPosterior> {
    let n = a.n_states();
    let dt = interval.length() / n_cells as f64;
    let p = transition_probabilities(a, dt);
    let mut lik = DMatrix::zeros(n_cells, n);
    let mut row = vec![0.0; n];
    for c in 0..n_cells {
        let start = interval.start() + c as f64 * dt;
        let w = if c + 1 == n_cells {
            Window::closed(start, interval.end())
        } else {
            Window::half_open(start, interval.start() + (c + 1) as f64 * dt)
        };
        obs.fill_window(w, &mut row);
        for s in 0..n {
            lik[(c, s)] = row[s];
        }
    }
    let mut fwd = DMatrix::zeros(n_cells, n);
    let mut cur = pi0.probs().to_vec();
    let mut log_z = 0.0;
    for c in 0..n_cells {
        if c > 0 {
            cur = propagate(&p, &cur);
        }
        let m = (0..n)
            .map(|s| lik[(c, s)])
            .fold(f64::NEG_INFINITY, f64::max);
        for s in 0..n {
            cur[s] *= (lik[(c, s)] - m).exp();
        }
        let z = normalize(&mut cur);
        if !(z > 0.0) {
            return Err(Error::ImpossibleData { step: c });
        }
        log_z += z.ln() + m;
        for s in 0..n {
            fwd[(c, s)] = cur[s];
        }
    }
    let mut marg = DMatrix::zeros(n_cells, n);
    let mut beta = vec![1.0; n];
    for c in (0..n_cells).rev() {
        if c + 1 < n_cells {
            let m = (0..n)
                .map(|s| lik[(c + 1, s)])
                .fold(f64::NEG_INFINITY, f64::max);
            let next: Vec<f64> = (0..n)
                .map(|s| beta[s] * (lik[(c + 1, s)] - m).exp())
                .collect();
            beta = propagate_back(&p, &next);
            normalize(&mut beta);
        }
        let mut post: Vec<f64> = (0..n).map(|s| fwd[(c, s)] * beta[s]).collect();
        normalize(&mut post);
        for s in 0..n {
            marg[(c, s)] = post[s];
        }
    }
    Ok(DiscretizedPosterior {
        cell_marginals: marg,
        cell_width: dt,
        log_evidence: log_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::expm::transition_probabilities;

    fn sym2() -> RateMatrix {
        RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn no_observations_is_prediction() {
        let a = RateMatrix::from_rows(&[
            vec![-1.0, 0.5, 0.0],
            vec![1.0, -1.0, 2.0],
            vec![0.0, 0.5, -2.0],
        ])
        .unwrap();
        let pi0 = InitialDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let obs = DiscreteObservations::from_log_likelihoods(vec![], vec![]).unwrap();
        let iv = TimeInterval::new(0.0, 2.0).unwrap();
        let m = exact_smoothed_marginals(&a, &pi0, &obs, iv, &[0.7, 2.0]).unwrap();
        let p = transition_probabilities(&a, 0.7);
        let expect = propagate(&p, pi0.probs());
        for s in 0..3 {
            assert!((m[0][s] - expect[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_endpoint_bridge() {
        let obs = DiscreteObservations::noiseless(vec![0.0, 1.0], &[0, 0], 2).unwrap();
        let iv = TimeInterval::new(0.0, 1.0).unwrap();
        let m = exact_smoothed_marginals(
            &sym2(),
            &InitialDistribution::uniform(2),
            &obs,
            iv,
            &[0.5, 1.0],
        )
        .unwrap();
        // P00(0.5)^2 / P00(1) for the symmetric rate-1 chain
        let p00 = |t: f64| (1.0 + (-2.0 * t).exp()) / 2.0;
        let expect = p00(0.5).powi(2) / p00(1.0);
        assert!((m[0][0] - expect).abs() < 1e-10);
        assert_eq!(m[1], vec![1.0, 0.0]);
        let b = bridge_marginal(&sym2(), 0, 0, 1.0, 0.5);
        assert!((b[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn single_start_observation_reweights_pi0() {
        let a = RateMatrix::from_rows(&[vec![-1.0, 2.0], vec![1.0, -2.0]]).unwrap();
        let pi0 = InitialDistribution::new(vec![0.4, 0.6]).unwrap();
        let obs = DiscreteObservations::from_log_likelihoods(
            vec![0.0],
            vec![vec![0.9f64.ln(), 0.3f64.ln()]],
        )
        .unwrap();
        let iv = TimeInterval::new(0.0, 3.0).unwrap();
        let q = [0.0, 0.5, 1.7, 3.0];
        let m = exact_smoothed_marginals(&a, &pi0, &obs, iv, &q).unwrap();
        let mut w = vec![0.4 * 0.9, 0.6 * 0.3];
        normalize(&mut w);
        for (k, &t) in q.iter().enumerate() {
            let e = propagate(&transition_probabilities(&a, t), &w);
            for s in 0..2 {
                assert!((m[k][s] - e[s]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_size_cap() {
        let a = RateMatrix::zeros(17);
        let obs = DiscreteObservations::from_log_likelihoods(vec![], vec![]).unwrap();
        let iv = TimeInterval::new(0.0, 1.0).unwrap();
        assert!(
            exact_smoothed_marginals(&a, &InitialDistribution::uniform(17), &obs, iv, &[0.5])
                .is_err()
        );
    }
}
