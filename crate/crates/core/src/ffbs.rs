//! Forward-filtering backward-sampling for finite, possibly inhomogeneous,
//! discrete-time hidden Markov chains.
//!
//! Transition matrices are column-stochastic: `B[(to, from)]`. Likelihoods
//! are given in log space, one row of `n_states` values per time step. The
//! forward pass keeps normalized filtering distributions and accumulates the
//! log normalizers, so long chains with tiny likelihoods do not underflow.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mjp::InitialDistribution;
use crate::util::sample_categorical;

/// Per-step transition operators of a chain with `n_steps + 1` time points.
pub trait StepTransitions {
    fn n_states(&self) -> usize;

    fn n_steps(&self) -> usize;

    /// `dst = B^step src`.
    fn predict(&self, step: usize, src: &[f64], dst: &mut [f64]);

    /// `out[s] = B^step[(to, s)]`, the probabilities of reaching `to` from
    /// each state.
    fn weights_into(&self, step: usize, to: usize, out: &mut [f64]);
}

#[inline]
pub(crate) fn dense_predict(b: &DMatrix<f64>, src: &[f64], dst: &mut [f64]) {
    let n = b.nrows();
    let data = b.as_slice();
    dst.fill(0.0);
    for (from, &p) in src.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let col = &data[from * n..(from + 1) * n];
        for (d, &bv) in dst.iter_mut().zip(col) {
            *d += bv * p;
        }
    }
}

#[inline]
pub(crate) fn dense_weights(b: &DMatrix<f64>, to: usize, out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        *o = b[(to, s)];
    }
}

/// The same matrix at every step.
pub struct ConstantSteps<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub steps: usize,
}

impl StepTransitions for ConstantSteps<'_> {
    fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_steps(&self) -> usize {
        self.steps
    }

    fn predict(&self, _step: usize, src: &[f64], dst: &mut [f64]) {
        dense_predict(self.matrix, src, dst)
    }

    fn weights_into(&self, _step: usize, to: usize, out: &mut [f64]) {
        dense_weights(self.matrix, to, out)
    }
}

/// One explicit matrix per step.
pub struct MatrixSteps<'a> {
    pub matrices: &'a [DMatrix<f64>],
    pub n_states: usize,
}

impl StepTransitions for MatrixSteps<'_> {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_steps(&self) -> usize {
        self.matrices.len()
    }

    fn predict(&self, step: usize, src: &[f64], dst: &mut [f64]) {
        dense_predict(&self.matrices[step], src, dst)
    }

    fn weights_into(&self, step: usize, to: usize, out: &mut [f64]) {
        dense_weights(&self.matrices[step], to, out)
    }
}

/// A discrete-time HMM with explicit per-step matrices.
#[derive(Debug, Clone)]
pub struct HmmProblem {
    pi0: InitialDistribution,
    transitions: Vec<DMatrix<f64>>,
    log_likelihoods: DMatrix<f64>,
}

impl HmmProblem {
    /// `log_likelihoods` has one row per time point (`transitions.len() + 1`
    /// rows) and one column per state.
    pub fn new(
        pi0: InitialDistribution,
        transitions: Vec<DMatrix<f64>>,
        log_likelihoods: DMatrix<f64>,
    ) -> Result<Self> {
        let n = pi0.n_states();
        if log_likelihoods.nrows() != transitions.len() + 1 || log_likelihoods.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "expected a {}x{n} log-likelihood table, got {}x{}",
                transitions.len() + 1,
                log_likelihoods.nrows(),
                log_likelihoods.ncols()
            )));
        }
        if log_likelihoods
            .iter()
            .any(|x| x.is_nan() || *x == f64::INFINITY)
        {
            return Err(Error::InvalidModel(
                "log-likelihoods must be finite or -inf".into(),
            ));
        }
        for (t, b) in transitions.iter().enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "transition matrix {t} is not {n}x{n}"
                )));
            }
            for col in b.column_iter() {
                let sum: f64 = col.iter().sum();
                if col.iter().any(|x| *x < 0.0 || !x.is_finite()) || (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "transition matrix {t} is not column-stochastic"
                    )));
                }
            }
        }
        Ok(Self {
            pi0,
            transitions,
            log_likelihoods,
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi0.n_states()
    }

    pub fn n_steps(&self) -> usize {
        self.transitions.len()
    }

    pub fn pi0(&self) -> &InitialDistribution {
        &self.pi0
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transitions
    }

    pub fn log_likelihood(&self, step: usize, s: usize) -> f64 {
        self.log_likelihoods[(step, s)]
    }

    fn steps(&self) -> MatrixSteps<'_> {
        MatrixSteps {
            matrices: &self.transitions,
            n_states: self.n_states(),
        }
    }

    fn flat_log_likelihoods(&self) -> Vec<f64> {
        let (rows, n) = self.log_likelihoods.shape();
        let mut v = Vec::with_capacity(rows * n);
        for r in 0..rows {
            v.extend(self.log_likelihoods.row(r).iter());
        }
        v
    }
}

/// A posterior state sequence and the data log marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSample {
    pub states: Vec<usize>,
    pub log_marginal: f64,
}

/// Filtering distributions `p(S_t | O_0..O_t)`, one row per time point.
#[derive(Debug, Clone)]
pub struct FilteredMarginals {
    pub marginals: DMatrix<f64>,
    pub log_marginal: f64,
}

/// Reusable buffers for repeated FFBS calls.
#[derive(Debug, Default, Clone)]
pub struct FfbsWorkspace {
    filtered: Vec<f64>,
    pred: Vec<f64>,
    weights: Vec<f64>,
}

impl FfbsWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forward pass. Leaves normalized filtering distributions in
    /// `self.filtered` and returns the log marginal likelihood.
    fn filter<T: StepTransitions + ?Sized>(
        &mut self,
        pi0: &[f64],
        steps: &T,
        loglik: &[f64],
    ) -> Result<f64> {
        let n = steps.n_states();
        let n_points = steps.n_steps() + 1;
        assert_eq!(pi0.len(), n);
        assert_eq!(
            loglik.len(),
            n_points * n,
            "log-likelihood table has the wrong size"
        );
        self.filtered.clear();
        self.filtered.resize(n_points * n, 0.0);
        self.pred.clear();
        self.pred.extend_from_slice(pi0);
        let mut log_z = 0.0;
        for t in 0..n_points {
            let ll = &loglik[t * n..(t + 1) * n];
            let m = ll
                .iter()
                .zip(&self.pred)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&l, _)| l)
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(Error::ImpossibleData { step: t });
            }
            let row = &mut self.filtered[t * n..(t + 1) * n];
            let mut c = 0.0;
            for ((f, &p), &l) in row.iter_mut().zip(&self.pred).zip(ll) {
                *f = if p > 0.0 { p * (l - m).exp() } else { 0.0 };
                c += *f;
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ImpossibleData { step: t });
            }
            let inv = 1.0 / c;
            row.iter_mut().for_each(|f| *f *= inv);
            log_z += c.ln() + m;
            if t + 1 < n_points {
                steps.predict(t, &self.filtered[t * n..(t + 1) * n], &mut self.pred);
            }
        }
        Ok(log_z)
    }

    /// Draws a state sequence from the exact posterior.
    pub fn sample<T, R>(
        &mut self,
        pi0: &[f64],
        steps: &T,
        loglik: &[f64],
        rng: &mut R,
    ) -> Result<HmmSample>
    where
        T: StepTransitions + ?Sized,
        R: Rng + ?Sized,
    {
        let log_marginal = self.filter(pi0, steps, loglik)?;
        let n = steps.n_states();
        let last = steps.n_steps();
        let mut states = vec![0; last + 1];
        states[last] = sample_categorical(rng, &self.filtered[last * n..(last + 1) * n]);
        self.weights.resize(n, 0.0);
        for t in (0..last).rev() {
            steps.weights_into(t, states[t + 1], &mut self.weights);
            let row = &self.filtered[t * n..(t + 1) * n];
            for (w, &f) in self.weights.iter_mut().zip(row) {
                *w *= f;
            }
            states[t] = sample_categorical(rng, &self.weights);
        }
        Ok(HmmSample {
            states,
            log_marginal,
        })
    }

    pub fn marginals<T: StepTransitions + ?Sized>(
        &mut self,
        pi0: &[f64],
        steps: &T,
        loglik: &[f64],
    ) -> Result<FilteredMarginals> {
        let log_marginal = self.filter(pi0, steps, loglik)?;
        let n = steps.n_states();
        let marginals = DMatrix::from_row_slice(steps.n_steps() + 1, n, &self.filtered);
        Ok(FilteredMarginals {
            marginals,
            log_marginal,
        })
    }
}

pub fn ffbs_sample<R: Rng + ?Sized>(problem: &HmmProblem, rng: &mut R) -> Result<HmmSample> {
    let ll = problem.flat_log_likelihoods();
    FfbsWorkspace::new().sample(problem.pi0.probs(), &problem.steps(), &ll, rng)
}

pub fn forward_marginals(problem: &HmmProblem) -> Result<FilteredMarginals> {
    let ll = problem.flat_log_likelihoods();
    FfbsWorkspace::new().marginals(problem.pi0.probs(), &problem.steps(), &ll)
}
