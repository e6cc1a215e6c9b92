//! Exact MCMC for Markov jump processes by uniformization.
//!
//! The central piece is a blocked Gibbs sampler that alternates between
//! drawing thinned Poisson events given the current path and resampling the
//! path on the resulting time grid with forward-filtering
//! backward-sampling. Around it sit forward simulators, Bayesian parameter
//! updates, Markov-modulated Poisson processes, continuous-time Bayesian
//! networks and diagnostics.
//!
//! Rate matrices use the column convention throughout: `A[(to, from)]` is
//! the rate from `from` to `to`, and columns sum to zero.

// negated float comparisons are used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bayes;
pub mod cli;
pub mod ctbn;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod ffbs;
pub mod gibbs;
pub mod mjp;
pub mod mmpp;
pub mod model_file;
pub mod uniformization;
mod util;

pub use error::{Error, Result};
pub use gibbs::{
    gibbs_kernel, initial_trajectory, run_chain, run_chain_with, DiscreteObservations, GibbsConfig,
    MjpGibbs, NoObservations, ObservationModel, Window,
};
pub use mjp::{
    gillespie_sample, path_log_density, sufficient_stats, InitialDistribution, RateMatrix,
    StateSpace, SufficientStats, TimeInterval, Trajectory,
};
pub use uniformization::OmegaMultiplier;
