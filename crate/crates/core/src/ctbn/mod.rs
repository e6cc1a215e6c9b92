//! Continuous-time Bayesian networks.
//!
//! A CTBN is an MJP over a product space whose components ("nodes") evolve
//! one at a time. Node `k` jumps with the conditional generator
//! `A^{k|u}`, where `u` is the current configuration of its parents. Graphs
//! may contain cycles.
//!
//! Parent configurations are mixed-radix indices with the first parent least
//! significant. Joint states use the same layout with node 0 least
//! significant.

mod format;
mod gibbs;
mod lotka_volterra;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gibbs::{trajectory_log_likelihood, DiscreteObservations, ObservationModel, Window};
use crate::mjp::{
    format_time, InitialDistribution, RateMatrix, SufficientStats, TimeInterval, Trajectory,
};
use crate::util::{sample_categorical, sample_exponential};

pub use format::CtbnModelFile;
pub use gibbs::{
    ctbn_gibbs_sweep, ctbn_initial_trajectory, node_gibbs_kernel, run_ctbn_chain_with, CtbnGibbs,
    CtbnGibbsConfig,
};
pub use lotka_volterra::{
    lotka_volterra_emission, lotka_volterra_model, LotkaVolterraExperiment, LotkaVolterraRates,
};

/// Default cap on the product-space size accepted by [`amalgamate`].
pub const DEFAULT_AMALGAMATION_CAP: usize = 10_000;

/// Generators with at least this fraction of zero entries are stored sparse.
const SPARSE_ZERO_FRACTION: f64 = 0.9;

/// Off-diagonal rates in compressed column and row form, plus exit rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    n: usize,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    exit: Vec<f64>,
}

impl SparseGenerator {
    /// `entries` are `(to, from, rate)` off-diagonal triplets. Zero rates
    /// are dropped; repeated positions are rejected.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGenerator("empty state space".into()));
        }
        let mut by_col: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(to, from, r) in entries {
            if to >= n || from >= n || to == from {
                return Err(Error::InvalidGenerator(format!(
                    "bad off-diagonal position ({to}, {from})"
                )));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidGenerator(format!(
                    "rate {r} at ({to}, {from}) is not finite and nonnegative"
                )));
            }
            if r > 0.0 {
                by_col.push((from, to, r));
            }
        }
        by_col.sort_by_key(|e| (e.0, e.1));
        if by_col
            .windows(2)
            .any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(Error::InvalidGenerator("repeated entry".into()));
        }
        let mut col_ptr = vec![0; n + 1];
        let mut exit = vec![0.0; n];
        for &(from, _, r) in &by_col {
            col_ptr[from + 1] += 1;
            exit[from] += r;
        }
        for i in 0..n {
            col_ptr[i + 1] += col_ptr[i];
        }
        let col_rows = by_col.iter().map(|e| e.1).collect();
        let col_vals = by_col.iter().map(|e| e.2).collect();

        let mut by_row: Vec<(usize, usize, f64)> =
            by_col.iter().map(|&(from, to, r)| (to, from, r)).collect();
        by_row.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n + 1];
        for &(to, _, _) in &by_row {
            row_ptr[to + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_cols = by_row.iter().map(|e| e.1).collect();
        let row_vals = by_row.iter().map(|e| e.2).collect();
        Ok(Self {
            n,
            col_ptr,
            col_rows,
            col_vals,
            row_ptr,
            row_cols,
            row_vals,
            exit,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_nonzero_off_diagonal(&self) -> usize {
        self.col_vals.len()
    }

    pub fn rate(&self, to: usize, from: usize) -> f64 {
        if to == from {
            return -self.exit[from];
        }
        let range = self.col_ptr[from]..self.col_ptr[from + 1];
        match self.col_rows[range.clone()].binary_search(&to) {
            Ok(i) => self.col_vals[range.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn exit_rate(&self, s: usize) -> f64 {
        self.exit[s]
    }

    /// Nonzero rates out of `from`, as `(to, rate)`.
    pub fn column(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[from]..self.col_ptr[from + 1];
        self.col_rows[r.clone()]
            .iter()
            .copied()
            .zip(self.col_vals[r].iter().copied())
    }

    /// `dst = (I + A / omega) src`.
    pub(crate) fn predict_uniformized(&self, omega: f64, src: &[f64], dst: &mut [f64]) {
        if omega == 0.0 {
            dst.copy_from_slice(src);
            return;
        }
        let inv = 1.0 / omega;
        for ((d, &p), &e) in dst.iter_mut().zip(src).zip(&self.exit) {
            *d = p * (1.0 - e * inv).max(0.0);
        }
        for (from, &p) in src.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let pw = p * inv;
            for i in self.col_ptr[from]..self.col_ptr[from + 1] {
                dst[self.col_rows[i]] += self.col_vals[i] * pw;
            }
        }
    }

    /// `out[s] = (I + A / omega)[(to, s)]`.
    pub(crate) fn weights_uniformized(&self, omega: f64, to: usize, out: &mut [f64]) {
        out.fill(0.0);
        if omega == 0.0 {
            out[to] = 1.0;
            return;
        }
        let inv = 1.0 / omega;
        out[to] = (1.0 - self.exit[to] * inv).max(0.0);
        for i in self.row_ptr[to]..self.row_ptr[to + 1] {
            out[self.row_cols[i]] = self.row_vals[i] * inv;
        }
    }

    pub fn to_rate_matrix(&self) -> RateMatrix {
        let mut a = DMatrix::zeros(self.n, self.n);
        for from in 0..self.n {
            for (to, r) in self.column(from) {
                a[(to, from)] = r;
            }
            a[(from, from)] = -self.exit[from];
        }
        RateMatrix::new(a).expect("sparse generator is valid by construction")
    }
}

/// A conditional generator `A^{k|u}`, dense or compressed.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalGenerator {
    Dense(RateMatrix),
    Sparse(SparseGenerator),
}

impl ConditionalGenerator {
    /// Picks the sparse form when at least 90% of entries are zero.
    pub fn from_rate_matrix(a: RateMatrix) -> Self {
        let n = a.n_states();
        let zeros = a.as_matrix().iter().filter(|&&x| x == 0.0).count();
        if zeros as f64 >= SPARSE_ZERO_FRACTION * (n * n) as f64 {
            let mut entries = Vec::new();
            for from in 0..n {
                for to in 0..n {
                    let r = a.rate(to, from);
                    if to != from && r > 0.0 {
                        entries.push((to, from, r));
                    }
                }
            }
            Self::Sparse(
                SparseGenerator::from_triplets(n, &entries)
                    .expect("entries come from a valid generator"),
            )
        } else {
            Self::Dense(a)
        }
    }

    /// Builds from off-diagonal `(to, from, rate)` triplets without a dense
    /// intermediate when the result is sparse.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let sparse = SparseGenerator::from_triplets(n, entries)?;
        let zeros = n * n
            - sparse.n_nonzero_off_diagonal()
            - sparse.exit.iter().filter(|&&e| e != 0.0).count();
        if zeros as f64 >= SPARSE_ZERO_FRACTION * (n * n) as f64 {
            Ok(Self::Sparse(sparse))
        } else {
            Ok(Self::Dense(sparse.to_rate_matrix()))
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Self::Dense(a) => a.n_states(),
            Self::Sparse(s) => s.n_states(),
        }
    }

    #[inline]
    pub fn rate(&self, to: usize, from: usize) -> f64 {
        match self {
            Self::Dense(a) => a.rate(to, from),
            Self::Sparse(s) => s.rate(to, from),
        }
    }

    #[inline]
    pub fn exit_rate(&self, s: usize) -> f64 {
        match self {
            Self::Dense(a) => a.exit_rate(s),
            Self::Sparse(g) => g.exit_rate(s),
        }
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n_states())
            .map(|s| self.exit_rate(s))
            .fold(0.0, f64::max)
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Self::Sparse(_))
    }

    pub fn to_rate_matrix(&self) -> RateMatrix {
        match self {
            Self::Dense(a) => a.clone(),
            Self::Sparse(s) => s.to_rate_matrix(),
        }
    }

    /// Writes the off-diagonal rates out of `from` into `out` (length
    /// `n_states`, zero on the diagonal).
    fn jump_weights(&self, from: usize, out: &mut Vec<f64>) {
        let n = self.n_states();
        out.clear();
        out.resize(n, 0.0);
        match self {
            Self::Dense(a) => {
                for (to, o) in out.iter_mut().enumerate() {
                    if to != from {
                        *o = a.rate(to, from);
                    }
                }
            }
            Self::Sparse(s) => {
                for (to, r) in s.column(from) {
                    out[to] = r;
                }
            }
        }
    }
}

/// One node: its name, cardinality, parents and a generator per parent
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CtbnNode {
    name: String,
    cardinality: usize,
    parents: Vec<usize>,
    generators: Vec<ConditionalGenerator>,
}

impl CtbnNode {
    pub fn new(
        name: impl Into<String>,
        cardinality: usize,
        parents: Vec<usize>,
        generators: Vec<ConditionalGenerator>,
    ) -> Self {
        Self {
            name: name.into(),
            cardinality,
            parents,
            generators,
        }
    }

    /// A node whose generators are given as dense matrices.
    pub fn dense(
        name: impl Into<String>,
        cardinality: usize,
        parents: Vec<usize>,
        generators: Vec<RateMatrix>,
    ) -> Self {
        let gens = generators
            .into_iter()
            .map(ConditionalGenerator::from_rate_matrix)
            .collect();
        Self::new(name, cardinality, parents, gens)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn generators(&self) -> &[ConditionalGenerator] {
        &self.generators
    }
}

/// The initial distribution over joint states.
#[derive(Debug, Clone, PartialEq)]
pub enum CtbnInitial {
    /// Independent per-node distributions.
    Product(Vec<InitialDistribution>),
    /// A table over joint indices (node 0 least significant).
    Joint(InitialDistribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtbnModel {
    nodes: Vec<CtbnNode>,
    children: Vec<Vec<usize>>,
    parent_strides: Vec<Vec<usize>>,
    initial: CtbnInitial,
}

impl CtbnModel {
    pub fn new(nodes: Vec<CtbnNode>, initial: CtbnInitial) -> Result<Self> {
        let k_nodes = nodes.len();
        if k_nodes == 0 {
            return Err(Error::InvalidModel(
                "a network needs at least one node".into(),
            ));
        }
        let mut children = vec![Vec::new(); k_nodes];
        let mut parent_strides = Vec::with_capacity(k_nodes);
        for (k, node) in nodes.iter().enumerate() {
            if node.cardinality == 0 {
                return Err(Error::InvalidModel(format!(
                    "node {} has no states",
                    node.name
                )));
            }
            if nodes[..k].iter().any(|o| o.name == node.name) {
                return Err(Error::InvalidModel(format!(
                    "duplicate node name {}",
                    node.name
                )));
            }
            let mut strides = Vec::with_capacity(node.parents.len());
            let mut n_configs: usize = 1;
            for (i, &p) in node.parents.iter().enumerate() {
                if p >= k_nodes {
                    return Err(Error::InvalidModel(format!(
                        "node {} has unknown parent {p}",
                        node.name
                    )));
                }
                if p == k {
                    return Err(Error::InvalidModel(format!(
                        "node {} lists itself as a parent",
                        node.name
                    )));
                }
                if node.parents[..i].contains(&p) {
                    return Err(Error::InvalidModel(format!(
                        "node {} repeats parent {p}",
                        node.name
                    )));
                }
                strides.push(n_configs);
                n_configs = n_configs.checked_mul(nodes[p].cardinality).ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "node {} has too many parent configurations",
                        node.name
                    ))
                })?;
                children[p].push(k);
            }
            if node.generators.len() != n_configs {
                return Err(Error::InvalidModel(format!(
                    "node {} needs {n_configs} conditional generators, got {}",
                    node.name,
                    node.generators.len()
                )));
            }
            if let Some(g) = node
                .generators
                .iter()
                .find(|g| g.n_states() != node.cardinality)
            {
                return Err(Error::InvalidModel(format!(
                    "node {} has a {}-state generator but cardinality {}",
                    node.name,
                    g.n_states(),
                    node.cardinality
                )));
            }
            parent_strides.push(strides);
        }
        match &initial {
            CtbnInitial::Product(dists) => {
                if dists.len() != k_nodes
                    || dists
                        .iter()
                        .zip(&nodes)
                        .any(|(d, n)| d.n_states() != n.cardinality)
                {
                    return Err(Error::InvalidModel(
                        "per-node initial distributions do not match the nodes".into(),
                    ));
                }
            }
            CtbnInitial::Joint(d) => {
                let size = nodes
                    .iter()
                    .try_fold(1usize, |acc, n| acc.checked_mul(n.cardinality));
                if size != Some(d.n_states()) {
                    return Err(Error::InvalidModel(
                        "joint initial table does not match the product space".into(),
                    ));
                }
            }
        }
        Ok(Self {
            nodes,
            children,
            parent_strides,
            initial,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, k: usize) -> &CtbnNode {
        &self.nodes[k]
    }

    pub fn nodes(&self) -> &[CtbnNode] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.cardinality).collect()
    }

    pub fn parents(&self, k: usize) -> &[usize] {
        &self.nodes[k].parents
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    pub fn n_configs(&self, k: usize) -> usize {
        self.nodes[k].generators.len()
    }

    /// Stride of `parent` in the configuration index of `k`, if it is a
    /// parent.
    pub fn parent_stride(&self, k: usize, parent: usize) -> Option<usize> {
        let i = self.nodes[k].parents.iter().position(|&p| p == parent)?;
        Some(self.parent_strides[k][i])
    }

    /// Index of the parent configuration of `k` in the joint `state`.
    #[inline]
    pub fn parent_config(&self, k: usize, state: &[usize]) -> usize {
        self.nodes[k]
            .parents
            .iter()
            .zip(&self.parent_strides[k])
            .map(|(&p, &st)| state[p] * st)
            .sum()
    }

    /// Parent states of a configuration index, in parent order.
    pub fn decode_config(&self, k: usize, mut u: usize) -> Vec<usize> {
        self.nodes[k]
            .parents
            .iter()
            .map(|&p| {
                let c = self.nodes[p].cardinality;
                let d = u % c;
                u /= c;
                d
            })
            .collect()
    }

    #[inline]
    pub fn generator(&self, k: usize, u: usize) -> &ConditionalGenerator {
        &self.nodes[k].generators[u]
    }

    pub fn initial(&self) -> &CtbnInitial {
        &self.initial
    }

    /// Parents, children and the children's other parents of `k`, sorted.
    pub fn markov_blanket(&self, k: usize) -> Vec<usize> {
        let mut b: Vec<usize> = self.parents(k).to_vec();
        for &c in self.children(k) {
            b.push(c);
            b.extend(self.parents(c).iter().copied().filter(|&p| p != k));
        }
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Size of the product space, or `None` on overflow.
    pub fn joint_size(&self) -> Option<usize> {
        self.nodes
            .iter()
            .try_fold(1usize, |acc, n| acc.checked_mul(n.cardinality))
    }

    pub fn joint_index(&self, state: &[usize]) -> usize {
        let mut idx = 0;
        for (n, &s) in self.nodes.iter().zip(state).rev() {
            idx = idx * n.cardinality + s;
        }
        idx
    }

    pub fn joint_state(&self, mut idx: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|n| {
                let s = idx % n.cardinality;
                idx /= n.cardinality;
                s
            })
            .collect()
    }

    /// `pi_0(s0_k = s | s0_{-k})` for every `s`.
    pub fn initial_conditional(&self, k: usize, s0: &[usize], out: &mut Vec<f64>) {
        let card = self.nodes[k].cardinality;
        out.clear();
        match &self.initial {
            CtbnInitial::Product(d) => out.extend_from_slice(d[k].probs()),
            CtbnInitial::Joint(d) => {
                let mut state = s0.to_vec();
                for s in 0..card {
                    state[k] = s;
                    out.push(d.prob(self.joint_index(&state)));
                }
                let total: f64 = out.iter().sum();
                if total > 0.0 {
                    out.iter_mut().for_each(|p| *p /= total);
                }
            }
        }
    }

    /// Draws `s0` with probability proportional to
    /// `pi_0(s0) * exp(log_weight(k, s0_k))`.
    pub fn sample_initial_weighted<R: Rng + ?Sized>(
        &self,
        log_weight: impl Fn(usize, usize) -> f64,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        match &self.initial {
            CtbnInitial::Product(dists) => dists
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let w: Vec<f64> = d
                        .probs()
                        .iter()
                        .enumerate()
                        .map(|(s, p)| p * log_weight(k, s).exp())
                        .collect();
                    if w.iter().sum::<f64>() > 0.0 {
                        Ok(sample_categorical(rng, &w))
                    } else {
                        Err(Error::InvalidObservations(format!(
                            "no initial state of node {k} fits the data"
                        )))
                    }
                })
                .collect(),
            CtbnInitial::Joint(d) => {
                let w: Vec<f64> = (0..d.n_states())
                    .map(|i| {
                        let state = self.joint_state(i);
                        d.prob(i)
                            * state
                                .iter()
                                .enumerate()
                                .map(|(k, &s)| log_weight(k, s))
                                .sum::<f64>()
                                .exp()
                    })
                    .collect();
                if w.iter().sum::<f64>() > 0.0 {
                    Ok(self.joint_state(sample_categorical(rng, &w)))
                } else {
                    Err(Error::InvalidObservations(
                        "no initial joint state fits the data".into(),
                    ))
                }
            }
        }
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.sample_initial_weighted(|_, _| 0.0, rng)
            .expect("prior weights are positive somewhere")
    }

    /// Checks that a trajectory lives on this model's state space.
    pub fn check_trajectory(&self, traj: &CtbnTrajectory) -> Result<()> {
        if traj.s0.len() != self.n_nodes() {
            return Err(Error::InvalidTrajectory(
                "initial state has the wrong number of nodes".into(),
            ));
        }
        let bad_s0 = traj
            .s0
            .iter()
            .zip(&self.nodes)
            .any(|(&s, n)| s >= n.cardinality);
        let bad_jump = traj
            .nodes
            .iter()
            .zip(&traj.states)
            .any(|(&k, &s)| s >= self.nodes[k].cardinality);
        if bad_s0 || bad_jump {
            return Err(Error::InvalidTrajectory(
                "state outside a node's range".into(),
            ));
        }
        Ok(())
    }
}

/// A CTBN path in sparse form: the initial joint state plus, per jump, its
/// time, the node that changed and that node's new state.
#[derive(Debug, Clone, PartialEq)]
pub struct CtbnTrajectory {
    s0: Vec<usize>,
    times: Vec<f64>,
    nodes: Vec<usize>,
    states: Vec<usize>,
    interval: TimeInterval,
}

impl CtbnTrajectory {
    pub fn new(
        s0: Vec<usize>,
        times: Vec<f64>,
        nodes: Vec<usize>,
        states: Vec<usize>,
        interval: TimeInterval,
    ) -> Result<Self> {
        if times.len() != nodes.len() || times.len() != states.len() {
            return Err(Error::InvalidTrajectory(
                "jump times, nodes and states differ in length".into(),
            ));
        }
        let mut cur = s0.clone();
        let mut prev_t = interval.start();
        for (i, ((&t, &k), &s)) in times.iter().zip(&nodes).zip(&states).enumerate() {
            if !(t > prev_t) || t > interval.end() {
                return Err(Error::InvalidTrajectory(format!(
                    "jump {i} at time {t} is not strictly after {prev_t} or leaves the interval"
                )));
            }
            let Some(c) = cur.get_mut(k) else {
                return Err(Error::InvalidTrajectory(format!(
                    "jump {i} names unknown node {k}"
                )));
            };
            if *c == s {
                return Err(Error::InvalidTrajectory(format!(
                    "jump {i} leaves node {k} in state {s}"
                )));
            }
            *c = s;
            prev_t = t;
        }
        Ok(Self {
            s0,
            times,
            nodes,
            states,
            interval,
        })
    }

    pub fn constant(s0: Vec<usize>, interval: TimeInterval) -> Self {
        Self {
            s0,
            times: vec![],
            nodes: vec![],
            states: vec![],
            interval,
        }
    }

    pub fn initial_state(&self) -> &[usize] {
        &self.s0
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn jump_states(&self) -> &[usize] {
        &self.states
    }

    pub fn interval(&self) -> TimeInterval {
        self.interval
    }

    pub fn n_nodes(&self) -> usize {
        self.s0.len()
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len()
    }

    /// The joint state at `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> Vec<usize> {
        let mut cur = self.s0.clone();
        let end = self.times.partition_point(|&x| x <= t);
        for (&k, &s) in self.nodes[..end].iter().zip(&self.states[..end]) {
            cur[k] = s;
        }
        cur
    }

    pub fn final_state(&self) -> Vec<usize> {
        self.state_at(self.interval.end())
    }

    /// The marginal path of node `k`.
    pub fn node_path(&self, k: usize) -> Trajectory {
        let mut times = Vec::new();
        let mut states = Vec::new();
        for ((&t, &j), &s) in self.times.iter().zip(&self.nodes).zip(&self.states) {
            if j == k {
                times.push(t);
                states.push(s);
            }
        }
        Trajectory::new(self.s0[k], times, states, self.interval)
            .expect("a node path inherits validity")
    }

    /// The same path as a flat MJP over joint indices.
    pub fn to_flat(&self, model: &CtbnModel) -> Trajectory {
        let mut cur = self.s0.clone();
        let s0 = model.joint_index(&cur);
        let mut states = Vec::with_capacity(self.times.len());
        for (&k, &s) in self.nodes.iter().zip(&self.states) {
            cur[k] = s;
            states.push(model.joint_index(&cur));
        }
        Trajectory::new(s0, self.times.clone(), states, self.interval)
            .expect("a flat path inherits validity")
    }

    /// Splits a flat path into node jumps; each flat jump must change
    /// exactly one node.
    pub fn from_flat(flat: &Trajectory, model: &CtbnModel) -> Result<Self> {
        let s0 = model.joint_state(flat.initial_state());
        let mut cur = s0.clone();
        let mut nodes = Vec::with_capacity(flat.n_jumps());
        let mut states = Vec::with_capacity(flat.n_jumps());
        for (&t, &x) in flat.jump_times().iter().zip(flat.jump_states()) {
            let next = model.joint_state(x);
            let changed: Vec<usize> = (0..cur.len()).filter(|&k| cur[k] != next[k]).collect();
            if changed.len() != 1 {
                return Err(Error::InvalidTrajectory(format!(
                    "flat jump at {t} changes {} nodes",
                    changed.len()
                )));
            }
            nodes.push(changed[0]);
            states.push(next[changed[0]]);
            cur = next;
        }
        Self::new(
            s0,
            flat.jump_times().to_vec(),
            nodes,
            states,
            flat.interval(),
        )
    }

    /// Writes `time,node,state` CSV. The first rows hold every node's state
    /// at `t_start`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["time", "node", "state"])?;
        let t0 = format_time(self.interval.start());
        for (k, s) in self.s0.iter().enumerate() {
            w.write_record([t0.clone(), k.to_string(), s.to_string()])?;
        }
        for ((t, k), s) in self.times.iter().zip(&self.nodes).zip(&self.states) {
            w.write_record([format_time(*t), k.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`CtbnTrajectory::write_csv`].
    pub fn read_csv<R: Read>(reader: R, n_nodes: usize, t_end: f64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in r.deserialize() {
            let row: (f64, usize, usize) = rec?;
            rows.push(row);
        }
        if rows.len() < n_nodes || (0..n_nodes).any(|k| rows[k].1 != k || rows[k].0 != rows[0].0) {
            return Err(Error::InvalidTrajectory(format!(
                "expected {n_nodes} initial rows at the start time"
            )));
        }
        let interval = TimeInterval::new(rows[0].0, t_end)?;
        let s0 = rows[..n_nodes].iter().map(|r| r.2).collect();
        let rest = &rows[n_nodes..];
        Self::new(
            s0,
            rest.iter().map(|r| r.0).collect(),
            rest.iter().map(|r| r.1).collect(),
            rest.iter().map(|r| r.2).collect(),
            interval,
        )
    }
}

/// Forward simulation by competing exponentials: every node draws a
/// holding time under its current conditional generator, the earliest one
/// jumps.
pub fn ctbn_simulate<R: Rng + ?Sized>(
    model: &CtbnModel,
    interval: TimeInterval,
    rng: &mut R,
) -> CtbnTrajectory {
    let s0 = model.sample_initial(rng);
    ctbn_simulate_from(model, s0, interval, rng)
}

/// [`ctbn_simulate`] from a given initial joint state.
pub fn ctbn_simulate_from<R: Rng + ?Sized>(
    model: &CtbnModel,
    s0: Vec<usize>,
    interval: TimeInterval,
    rng: &mut R,
) -> CtbnTrajectory {
    let mut cur = s0.clone();
    let (mut times, mut nodes, mut states) = (Vec::new(), Vec::new(), Vec::new());
    let mut weights = Vec::new();
    let mut t = interval.start();
    loop {
        let mut best = (f64::INFINITY, usize::MAX);
        for k in 0..model.n_nodes() {
            let rate = model
                .generator(k, model.parent_config(k, &cur))
                .exit_rate(cur[k]);
            let z = sample_exponential(rng, rate);
            if z < best.0 {
                best = (z, k);
            }
        }
        let (z, k) = best;
        if k == usize::MAX || t + z > interval.end() {
            break;
        }
        t += z;
        model
            .generator(k, model.parent_config(k, &cur))
            .jump_weights(cur[k], &mut weights);
        let to = sample_categorical(rng, &weights);
        cur[k] = to;
        times.push(t);
        nodes.push(k);
        states.push(to);
    }
    CtbnTrajectory {
        s0,
        times,
        nodes,
        states,
        interval,
    }
}

/// Flattens a network into one generator over the product space, and its
/// initial distribution.
pub fn amalgamate(model: &CtbnModel, cap: usize) -> Result<(RateMatrix, InitialDistribution)> {
    let size = model.joint_size().unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::StateSpaceTooLarge { size, cap });
    }
    let cards = model.cardinalities();
    let mut strides = vec![1usize; cards.len()];
    for k in 1..cards.len() {
        strides[k] = strides[k - 1] * cards[k - 1];
    }
    let mut a = DMatrix::zeros(size, size);
    let mut w = Vec::new();
    for x in 0..size {
        let state = model.joint_state(x);
        let mut exit = 0.0;
        for k in 0..cards.len() {
            model
                .generator(k, model.parent_config(k, &state))
                .jump_weights(state[k], &mut w);
            for (to, &r) in w.iter().enumerate() {
                if r > 0.0 {
                    let y = x + to * strides[k] - state[k] * strides[k];
                    a[(y, x)] += r;
                    exit += r;
                }
            }
        }
        a[(x, x)] = -exit;
    }
    let pi0 = match model.initial() {
        CtbnInitial::Joint(d) => d.clone(),
        CtbnInitial::Product(dists) => {
            let probs = (0..size)
                .map(|x| {
                    model
                        .joint_state(x)
                        .iter()
                        .zip(dists)
                        .map(|(&s, d)| d.prob(s))
                        .product()
                })
                .collect();
            InitialDistribution::from_weights(probs)?
        }
    };
    Ok((RateMatrix::new(a)?, pi0))
}

/// Per-node discrete observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CtbnObservations {
    per_node: Vec<DiscreteObservations>,
}

impl CtbnObservations {
    pub fn new(model: &CtbnModel, per_node: Vec<DiscreteObservations>) -> Result<Self> {
        if per_node.len() != model.n_nodes() {
            return Err(Error::InvalidObservations(format!(
                "expected observations for {} nodes, got {}",
                model.n_nodes(),
                per_node.len()
            )));
        }
        for (k, o) in per_node.iter().enumerate() {
            if !o.is_empty() && o.log_likelihoods(0).len() != model.node(k).cardinality() {
                return Err(Error::InvalidObservations(format!(
                    "observations of node {k} have the wrong width"
                )));
            }
        }
        Ok(Self { per_node })
    }

    pub fn empty(model: &CtbnModel) -> Self {
        let per_node = model
            .nodes()
            .iter()
            .map(|n| {
                DiscreteObservations::noiseless(vec![], &[], n.cardinality())
                    .expect("empty set is valid")
            })
            .collect();
        Self { per_node }
    }

    /// Exact observations of the whole joint state at the given times.
    pub fn noiseless_joint(
        model: &CtbnModel,
        times: &[f64],
        states: &[Vec<usize>],
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidObservations(
                "one joint state per time is required".into(),
            ));
        }
        let per_node = (0..model.n_nodes())
            .map(|k| {
                let xs: Vec<usize> = states.iter().map(|s| s[k]).collect();
                DiscreteObservations::noiseless(times.to_vec(), &xs, model.node(k).cardinality())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, per_node)
    }

    /// Reads exact observations from `time,node,state` CSV. Nodes are
    /// given by name or index.
    pub fn read_csv<R: Read>(reader: R, model: &CtbnModel) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<(f64, usize)>> = vec![Vec::new(); model.n_nodes()];
        for rec in r.deserialize() {
            let (t, node, s): (f64, String, usize) = rec?;
            let k = model
                .node_index(&node)
                .or_else(|| node.parse().ok().filter(|&k: &usize| k < model.n_nodes()))
                .ok_or_else(|| Error::InvalidObservations(format!("unknown node {node:?}")))?;
            rows[k].push((t, s));
        }
        let per_node = rows
            .into_iter()
            .enumerate()
            .map(|(k, mut r)| {
                r.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (times, xs): (Vec<f64>, Vec<usize>) = r.into_iter().unzip();
                DiscreteObservations::noiseless(times, &xs, model.node(k).cardinality())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, per_node)
    }

    pub fn node(&self, k: usize) -> &DiscreteObservations {
        &self.per_node[k]
    }

    pub fn log_likelihood(&self, traj: &CtbnTrajectory) -> f64 {
        (0..self.per_node.len())
            .map(|k| trajectory_log_likelihood(&traj.node_path(k), &self.per_node[k]))
            .sum()
    }

    /// The same observations seen as a model over joint indices.
    pub fn flat<'a>(&'a self, model: &CtbnModel) -> FlatCtbnObservations<'a> {
        FlatCtbnObservations {
            obs: self,
            cards: model.cardinalities(),
        }
    }
}

/// [`CtbnObservations`] over the amalgamated state space.
#[derive(Debug, Clone)]
pub struct FlatCtbnObservations<'a> {
    obs: &'a CtbnObservations,
    cards: Vec<usize>,
}

impl ObservationModel for FlatCtbnObservations<'_> {
    fn n_states(&self) -> usize {
        self.cards.iter().product()
    }

    fn window_log_likelihood(&self, mut state: usize, window: Window) -> f64 {
        let mut total = 0.0;
        for (o, &c) in self.obs.per_node.iter().zip(&self.cards) {
            total += o.window_log_likelihood(state % c, window);
            state /= c;
        }
        total
    }
}

/// Dwell times and transition counts of every node under every parent
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStats {
    stats: Vec<Vec<SufficientStats>>,
}

impl ConditionalStats {
    pub fn zeros(model: &CtbnModel) -> Self {
        let stats = (0..model.n_nodes())
            .map(|k| vec![SufficientStats::zeros(model.node(k).cardinality()); model.n_configs(k)])
            .collect();
        Self { stats }
    }

    pub fn from_trajectory(model: &CtbnModel, traj: &CtbnTrajectory) -> Self {
        let mut out = Self::zeros(model);
        let mut cur = traj.s0.clone();
        let mut prev_t = traj.interval.start();
        let add_dwell = |out: &mut Self, cur: &[usize], dt: f64| {
            for k in 0..cur.len() {
                out.stats[k][model.parent_config(k, cur)].add_dwell(cur[k], dt);
            }
        };
        for ((&t, &k), &s) in traj.times.iter().zip(&traj.nodes).zip(&traj.states) {
            add_dwell(&mut out, &cur, t - prev_t);
            out.stats[k][model.parent_config(k, &cur)].add_transition(cur[k], s);
            cur[k] = s;
            prev_t = t;
        }
        add_dwell(&mut out, &cur, traj.interval.end() - prev_t);
        out
    }

    pub fn get(&self, k: usize, u: usize) -> &SufficientStats {
        &self.stats[k][u]
    }

    /// All statistics flattened node by node, configuration by
    /// configuration, in [`SufficientStats::to_vec`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.stats
            .iter()
            .flatten()
            .flat_map(|s| s.to_vec())
            .collect()
    }

    pub fn labels(model: &CtbnModel) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..model.n_nodes() {
            let name = model.node(k).name();
            for u in 0..model.n_configs(k) {
                for l in SufficientStats::labels(model.node(k).cardinality()) {
                    out.push(format!("{name}|u{u}:{l}"));
                }
            }
        }
        out
    }
}
