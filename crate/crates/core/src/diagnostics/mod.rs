//! MCMC diagnostics, exact small-instance oracles and the statistical
//! helpers used by the acceptance tests.

mod ess;
mod expm;
pub mod oracle;
pub mod stats;

use serde::Serialize;

use crate::error::{Error, Result};

pub use ess::{effective_sample_size, median, EssEstimate, EssReport};
pub use expm::{matrix_exponential, transition_probabilities};
pub use oracle::{
    bridge_marginal, discretized_posterior, enumerate_hmm_posterior, exact_log_likelihood,
    exact_smoothed_marginals, DiscretizedPosterior, EnumeratedPosterior,
};

/// Summed relative error of estimated statistics against references.
#[derive(Debug, Clone, Serialize)]
pub struct RelativeErrorReport {
    /// `|estimate - reference| / reference`, `None` where the reference is 0.
    pub per_statistic: Vec<Option<f64>>,
    #[serde(rename = "avg_relative_error")]
    pub total: f64,
    /// Indices of statistics left out because their reference is zero.
    pub excluded: Vec<usize>,
}

/// `sum_j |estimate_j - reference_j| / reference_j` over positive references.
pub fn average_relative_error(
    estimates: &[f64],
    references: &[f64],
) -> Result<RelativeErrorReport> {
    if estimates.len() != references.len() {
        return Err(Error::InvalidConfig(
            "estimates and references differ in length".into(),
        ));
    }
    let mut per_statistic = Vec::with_capacity(estimates.len());
    let mut excluded = Vec::new();
    let mut total = 0.0;
    for (j, (&e, &r)) in estimates.iter().zip(references).enumerate() {
        if r > 0.0 {
            let rel = (e - r).abs() / r;
            total += rel;
            per_statistic.push(Some(rel));
        } else {
            excluded.push(j);
            per_statistic.push(None);
        }
    }
    if excluded.len() == references.len() {
        return Err(Error::InvalidConfig("every reference value is zero".into()));
    }
    Ok(RelativeErrorReport {
        per_statistic,
        total,
        excluded,
    })
}
