//! JSON model files for single MJPs and MMPPs.
//!
//! ```json
//! {
//!   "description": "optional free text",
//!   "rate_matrix": [[-1.0, 2.0], [1.0, -2.0]],
//!   "initial": [0.5, 0.5],
//!   "emission_rates": [1.0, 5.0],
//!   "observation_matrix": [[0.9, 0.2], [0.1, 0.8]]
//! }
//! ```
//!
//! `rate_matrix` rows are indexed `[to][from]`. `initial` defaults to
//! uniform. `emission_rates` makes the model an MMPP. `observation_matrix`
//! gives `p(value | state)` as `[value][state]` for discrete observations;
//! without it observed values are exact states.

use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::DiscreteObservations;
use crate::mjp::{InitialDistribution, RateMatrix};
use crate::mmpp::MmppModel;
use crate::util::sample_categorical;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MjpModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub rate_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emission_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_matrix: Option<Vec<Vec<f64>>>,
}

/// A validated model file.
#[derive(Debug, Clone, PartialEq)]
pub struct MjpModel {
    pub description: Option<String>,
    pub a: RateMatrix,
    pub pi0: InitialDistribution,
    pub emission_rates: Option<Vec<f64>>,
    /// `[value][state]`, columns summing to one.
    pub observation_matrix: Option<Vec<Vec<f64>>>,
}

impl MjpModelFile {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn into_model(self) -> Result<MjpModel> {
        let a = RateMatrix::from_rows(&self.rate_matrix)?;
        let n = a.n_states();
        let pi0 = match self.initial {
            Some(p) => InitialDistribution::new(p)?,
            None => InitialDistribution::uniform(n),
        };
        if pi0.n_states() != n {
            return Err(Error::InvalidModel(format!(
                "initial has {} entries for {n} states",
                pi0.n_states()
            )));
        }
        if let Some(rates) = &self.emission_rates {
            MmppModel::new(a.clone(), pi0.clone(), rates.clone())?;
        }
        if let Some(m) = &self.observation_matrix {
            if m.is_empty() || m.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidModel(format!(
                    "observation_matrix rows must have {n} entries"
                )));
            }
            for s in 0..n {
                let total: f64 = m.iter().map(|row| row[s]).sum();
                if m.iter().any(|row| !(row[s].is_finite() && row[s] >= 0.0))
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(Error::InvalidModel(format!(
                        "observation_matrix column {s} is not a distribution"
                    )));
                }
            }
        }
        Ok(MjpModel {
            description: self.description,
            a,
            pi0,
            emission_rates: self.emission_rates,
            observation_matrix: self.observation_matrix,
        })
    }
}

impl MjpModel {
    pub fn new(a: RateMatrix, pi0: InitialDistribution) -> Self {
        Self {
            description: None,
            a,
            pi0,
            emission_rates: None,
            observation_matrix: None,
        }
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        MjpModelFile::read(reader)?.into_model()
    }

    pub fn to_file(&self) -> MjpModelFile {
        MjpModelFile {
            description: self.description.clone(),
            rate_matrix: self.a.to_rows(),
            initial: Some(self.pi0.probs().to_vec()),
            emission_rates: self.emission_rates.clone(),
            observation_matrix: self.observation_matrix.clone(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model files always serialize")
    }

    pub fn n_states(&self) -> usize {
        self.a.n_states()
    }

    pub fn mmpp(&self) -> Result<MmppModel> {
        let rates = self
            .emission_rates
            .clone()
            .ok_or_else(|| Error::InvalidModel("model has no emission_rates".into()))?;
        MmppModel::new(self.a.clone(), self.pi0.clone(), rates)
    }

    /// Discrete observations of `values` at `times`, through the
    /// observation matrix if there is one and exact otherwise.
    pub fn observations(&self, times: Vec<f64>, values: &[usize]) -> Result<DiscreteObservations> {
        match &self.observation_matrix {
            Some(m) => {
                if let Some(v) = values.iter().find(|&&v| v >= m.len()) {
                    return Err(Error::InvalidObservations(format!(
                        "value {v} outside the observation alphabet"
                    )));
                }
                DiscreteObservations::with_emission(times, values, m)
            }
            None => DiscreteObservations::noiseless(times, values, self.n_states()),
        }
    }

    /// Draws one observed value given the state.
    pub fn sample_observation<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        match &self.observation_matrix {
            Some(m) => {
                let column: Vec<f64> = m.iter().map(|row| row[state]).collect();
                sample_categorical(rng, &column)
            }
            None => state,
        }
    }
}

/// Reads `time,value` CSV of discrete observations, sorted by time.
pub fn read_discrete_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "value" {
        return Err(Error::InvalidObservations(
            "expected header `time,value`".into(),
        ));
    }
    let mut rows: Vec<(f64, usize)> = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    if rows.iter().any(|(t, _)| !t.is_finite()) {
        return Err(Error::InvalidObservations(
            "observation times must be finite".into(),
        ));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = r#"{
        "rate_matrix": [[-1.0, 2.0], [1.0, -2.0]],
        "emission_rates": [1.0, 5.0],
        "observation_matrix": [[0.9, 0.2], [0.1, 0.8]]
    }"#;

    #[test]
    fn parses_defaults_and_round_trips() {
        let m = MjpModel::from_json(FILE.as_bytes()).unwrap();
        assert_eq!(m.a.rate(0, 1), 2.0);
        assert_eq!(m.pi0.probs(), &[0.5, 0.5]);
        assert_eq!(m.mmpp().unwrap().emission_rates, vec![1.0, 5.0]);
        let again = MjpModel::from_json(m.to_json_pretty().as_bytes()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_parts() {
        let mut f = MjpModelFile::read(FILE.as_bytes()).unwrap();
        f.initial = Some(vec![1.0]);
        assert!(f.into_model().is_err());
        let mut f = MjpModelFile::read(FILE.as_bytes()).unwrap();
        f.observation_matrix.as_mut().unwrap()[0][0] = 0.5;
        assert!(f.into_model().is_err());
        let mut f = MjpModelFile::read(FILE.as_bytes()).unwrap();
        f.emission_rates = Some(vec![-1.0, 1.0]);
        assert!(f.into_model().is_err());
        assert!(MjpModelFile::read(r#"{"rate_matrix": [[0]], "extra": 1}"#.as_bytes()).is_err());
    }

    #[test]
    fn observations_and_csv() {
        let m = MjpModel::from_json(FILE.as_bytes()).unwrap();
        let (t, v) = read_discrete_csv("time,value\n2.0,1\n0.5,0\n".as_bytes()).unwrap();
        assert_eq!(t, vec![0.5, 2.0]);
        assert_eq!(v, vec![0, 1]);
        let obs = m.observations(t, &v).unwrap();
        assert!((obs.log_likelihoods(1)[0] - 0.1f64.ln()).abs() < 1e-15);
        assert!(m.observations(vec![1.0], &[2]).is_err());
        assert!(read_discrete_csv("time,state\n0,0\n".as_bytes()).is_err());
    }
}
