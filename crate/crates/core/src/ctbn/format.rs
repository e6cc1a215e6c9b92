//! JSON model files for CTBNs.
//!
//! ```json
//! {
//!   "description": "optional free text",
//!   "nodes": [{"name": "a", "cardinality": 2}, {"name": "b", "cardinality": 2}],
//!   "edges": [["a", "b"]],
//!   "rates": {
//!     "a": [{"parents": [], "matrix": [[-1, 1], [1, -1]]}],
//!     "b": [{"parents": [0], "matrix": [[-1, 0], [1, 0]]},
//!           {"parents": [1], "matrix": [[-2, 2], [2, -2]]}]
//!   },
//!   "initial": {"product": {"a": [0.5, 0.5], "b": [1, 0]}}
//! }
//! ```
//!
//! `matrix` rows are indexed `[to][from]`, so columns sum to zero. A node's
//! parents are ordered as their edges appear in `edges`, and `parents`
//! gives one state per parent in that order. `initial` is either
//! `{"product": {name: probs}}` or `{"joint": probs}` over joint indices
//! with the first node least significant.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ConditionalGenerator, CtbnInitial, CtbnModel, CtbnNode};
use crate::error::{Error, Result};
use crate::mjp::{InitialDistribution, RateMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtbnModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub nodes: Vec<NodeDecl>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    pub rates: BTreeMap<String, Vec<RateEntry>>,
    pub initial: InitialDecl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDecl {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    #[serde(default)]
    pub parents: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialDecl {
    Product(BTreeMap<String, Vec<f64>>),
    Joint(Vec<f64>),
}

impl CtbnModelFile {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }

    pub fn into_model(self) -> Result<CtbnModel> {
        let index: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        if index.len() != self.nodes.len() {
            return Err(Error::InvalidModel("node names must be unique".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("unknown node {name:?}")))
        };
        let mut parents = vec![Vec::new(); self.nodes.len()];
        for (from, to) in &self.edges {
            parents[lookup(to)?].push(lookup(from)?);
        }
        if let Some(name) = self.rates.keys().find(|n| !index.contains_key(n.as_str())) {
            return Err(Error::InvalidModel(format!(
                "rates given for unknown node {name:?}"
            )));
        }

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (k, decl) in self.nodes.iter().enumerate() {
            let cards: Vec<usize> = parents[k]
                .iter()
                .map(|&p| self.nodes[p].cardinality)
                .collect();
            let n_configs = cards.iter().product::<usize>();
            let entries = self
                .rates
                .get(&decl.name)
                .ok_or_else(|| Error::InvalidModel(format!("no rates for node {:?}", decl.name)))?;
            let mut gens: Vec<Option<ConditionalGenerator>> = vec![None; n_configs];
            for e in entries {
                if e.parents.len() != cards.len()
                    || e.parents.iter().zip(&cards).any(|(s, c)| s >= c)
                {
                    return Err(Error::InvalidModel(format!(
                        "node {:?}: parent configuration {:?} does not match its parents",
                        decl.name, e.parents
                    )));
                }
                let mut u = 0;
                for (s, c) in e.parents.iter().zip(&cards).rev() {
                    u = u * c + s;
                }
                if gens[u].is_some() {
                    return Err(Error::InvalidModel(format!(
                        "node {:?}: configuration {:?} given twice",
                        decl.name, e.parents
                    )));
                }
                let a = RateMatrix::from_rows(&e.matrix).map_err(|err| {
                    Error::InvalidModel(format!(
                        "node {:?}, parents {:?}: {err}",
                        decl.name, e.parents
                    ))
                })?;
                gens[u] = Some(ConditionalGenerator::from_rate_matrix(a));
            }
            let gens = gens
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "node {:?} is missing parent configurations",
                        decl.name
                    ))
                })?;
            nodes.push(CtbnNode::new(
                decl.name.clone(),
                decl.cardinality,
                parents[k].clone(),
                gens,
            ));
        }

        let initial = match self.initial {
            InitialDecl::Joint(p) => CtbnInitial::Joint(InitialDistribution::new(p)?),
            InitialDecl::Product(mut map) => {
                let dists = self
                    .nodes
                    .iter()
                    .map(|n| {
                        let p = map.remove(&n.name).ok_or_else(|| {
                            Error::InvalidModel(format!("no initial distribution for {:?}", n.name))
                        })?;
                        InitialDistribution::new(p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(name) = map.keys().next() {
                    return Err(Error::InvalidModel(format!(
                        "initial distribution for unknown node {name:?}"
                    )));
                }
                CtbnInitial::Product(dists)
            }
        };
        CtbnModel::new(nodes, initial)
    }

    pub fn from_model(model: &CtbnModel, description: Option<String>) -> Self {
        let nodes = model
            .nodes()
            .iter()
            .map(|n| NodeDecl {
                name: n.name().to_string(),
                cardinality: n.cardinality(),
            })
            .collect();
        let mut edges = Vec::new();
        let mut rates = BTreeMap::new();
        for (k, node) in model.nodes().iter().enumerate() {
            for &p in node.parents() {
                edges.push((model.node(p).name().to_string(), node.name().to_string()));
            }
            let entries = (0..model.n_configs(k))
                .map(|u| RateEntry {
                    parents: model.decode_config(k, u),
                    matrix: model.generator(k, u).to_rate_matrix().to_rows(),
                })
                .collect();
            rates.insert(node.name().to_string(), entries);
        }
        let initial = match model.initial() {
            CtbnInitial::Joint(d) => InitialDecl::Joint(d.probs().to_vec()),
            CtbnInitial::Product(ds) => InitialDecl::Product(
                model
                    .nodes()
                    .iter()
                    .zip(ds)
                    .map(|(n, d)| (n.name().to_string(), d.probs().to_vec()))
                    .collect(),
            ),
        };
        Self {
            description,
            nodes,
            edges,
            rates,
            initial,
        }
    }
}

impl CtbnModel {
    /// Parses a JSON model file.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        CtbnModelFile::read(reader)?.into_model()
    }

    pub fn to_json_pretty(&self) -> String {
        CtbnModelFile::from_model(self, None).to_json_pretty()
    }
}
