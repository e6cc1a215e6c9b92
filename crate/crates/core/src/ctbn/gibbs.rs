//! Node-wise Gibbs sampling for CTBNs.
//!
//! A node update holds the rest of the network fixed. The node's path is
//! then an inhomogeneous MJP driven by its parents, reweighted by the
//! likelihood of its children's paths. Uniformization uses the piecewise
//! dominating rate `omega(u) = k max_s |A^{k|u}_s|`, which changes only
//! where the parent configuration does.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ctbn_simulate_from, ConditionalGenerator, CtbnModel, CtbnObservations, CtbnTrajectory,
};
use crate::error::{Error, Result};
use crate::ffbs::{dense_predict, dense_weights, FfbsWorkspace, StepTransitions};
use crate::gibbs::{DiscreteObservations, ObservationModel, Window};
use crate::mjp::{TimeInterval, Trajectory};
use crate::uniformization::{subordinated_transition_matrix, OmegaMultiplier};
use crate::util::poisson_points;

/// Initialization sweeps tried before giving up on infeasible data.
const INIT_SWEEPS: usize = 5;

enum StepOp {
    Dense(DMatrix<f64>),
    /// The generator itself is sparse; only `omega` is stored.
    Sparse(f64),
}

struct NodeSteps<'a> {
    ops: &'a [StepOp],
    gens: &'a [ConditionalGenerator],
    cfg: &'a [usize],
    n: usize,
}

impl StepTransitions for NodeSteps<'_> {
    fn n_states(&self) -> usize {
        self.n
    }

    fn n_steps(&self) -> usize {
        self.cfg.len()
    }

    fn predict(&self, step: usize, src: &[f64], dst: &mut [f64]) {
        let u = self.cfg[step];
        match (&self.ops[u], &self.gens[u]) {
            (StepOp::Dense(b), _) => dense_predict(b, src, dst),
            (StepOp::Sparse(omega), ConditionalGenerator::Sparse(g)) => {
                g.predict_uniformized(*omega, src, dst)
            }
            _ => unreachable!("sparse step without a sparse generator"),
        }
    }

    fn weights_into(&self, step: usize, to: usize, out: &mut [f64]) {
        let u = self.cfg[step];
        match (&self.ops[u], &self.gens[u]) {
            (StepOp::Dense(b), _) => dense_weights(b, to, out),
            (StepOp::Sparse(omega), ConditionalGenerator::Sparse(g)) => {
                g.weights_uniformized(*omega, to, out)
            }
            _ => unreachable!("sparse step without a sparse generator"),
        }
    }
}

/// The Markov blanket of the node being updated, as constant pieces.
///
/// Each piece records the parent configuration and, per candidate state
/// `s`, the children's total exit rate. Each child jump records, per `s`,
/// the log rate of that jump.
#[derive(Debug, Default)]
struct Context {
    cur: Vec<usize>,
    piece_start: Vec<f64>,
    piece_cfg: Vec<usize>,
    piece_pen: Vec<f64>,
    event_time: Vec<f64>,
    event_term: Vec<f64>,
    t_end: f64,
}

impl Context {
    #[inline]
    fn piece_end(&self, q: usize) -> f64 {
        self.piece_start.get(q + 1).copied().unwrap_or(self.t_end)
    }
}

/// Reusable node-wise sampler for one model and multiplier.
pub struct CtbnGibbs<'m> {
    model: &'m CtbnModel,
    omega: Vec<Vec<f64>>,
    ops: Vec<Vec<StepOp>>,
    // child_pos[k][j]: position of j among the children of k
    child_pos: Vec<Vec<Option<usize>>>,
    // child_stride[k][i]: stride of k in the configuration of its i-th child
    child_stride: Vec<Vec<usize>>,
    in_blanket: Vec<Vec<bool>>,
    ctx: Context,
    virt: Vec<f64>,
    grid: Vec<f64>,
    step_cfg: Vec<usize>,
    loglik: Vec<f64>,
    prior: Vec<f64>,
    ws: FfbsWorkspace,
    steps_done: u64,
}

impl<'m> CtbnGibbs<'m> {
    pub fn new(model: &'m CtbnModel, multiplier: OmegaMultiplier) -> Self {
        let n_nodes = model.n_nodes();
        let mut omega = Vec::with_capacity(n_nodes);
        let mut ops = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            let mut om = Vec::with_capacity(model.n_configs(k));
            let mut op = Vec::with_capacity(model.n_configs(k));
            for g in model.node(k).generators() {
                let w = multiplier.value() * g.max_exit_rate();
                om.push(w);
                op.push(match g {
                    ConditionalGenerator::Dense(a) => StepOp::Dense(
                        subordinated_transition_matrix(a, w)
                            .expect("k > 1 dominates every exit rate"),
                    ),
                    ConditionalGenerator::Sparse(_) => StepOp::Sparse(w),
                });
            }
            omega.push(om);
            ops.push(op);
        }
        let mut child_pos = vec![vec![None; n_nodes]; n_nodes];
        let mut child_stride = Vec::with_capacity(n_nodes);
        let mut in_blanket = vec![vec![false; n_nodes]; n_nodes];
        for k in 0..n_nodes {
            let mut strides = Vec::new();
            for (i, &c) in model.children(k).iter().enumerate() {
                child_pos[k][c] = Some(i);
                strides.push(
                    model
                        .parent_stride(c, k)
                        .expect("k is a parent of its child"),
                );
            }
            child_stride.push(strides);
            for j in model.markov_blanket(k) {
                in_blanket[k][j] = true;
            }
        }
        Self {
            model,
            omega,
            ops,
            child_pos,
            child_stride,
            in_blanket,
            ctx: Context::default(),
            virt: Vec::new(),
            grid: Vec::new(),
            step_cfg: Vec::new(),
            loglik: Vec::new(),
            prior: Vec::new(),
            ws: FfbsWorkspace::new(),
            steps_done: 0,
        }
    }

    pub fn model(&self) -> &'m CtbnModel {
        self.model
    }

    /// Grid points filtered so far, summed over node updates.
    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// Dominating rate of node `k` under parent configuration `u`.
    pub fn omega(&self, k: usize, u: usize) -> f64 {
        self.omega[k][u]
    }

    fn push_piece(&mut self, k: usize, t: f64) {
        let model = self.model;
        let ctx = &mut self.ctx;
        let n_k = model.node(k).cardinality();
        ctx.piece_start.push(t);
        ctx.piece_cfg.push(model.parent_config(k, &ctx.cur));
        let from = ctx.piece_pen.len();
        ctx.piece_pen.resize(from + n_k, 0.0);
        let pen = &mut ctx.piece_pen[from..];
        for (&c, &stride) in model.children(k).iter().zip(&self.child_stride[k]) {
            let base = model.parent_config(c, &ctx.cur) - ctx.cur[k] * stride;
            let yc = ctx.cur[c];
            for (s, p) in pen.iter_mut().enumerate() {
                *p += model.generator(c, base + s * stride).exit_rate(yc);
            }
        }
    }

    fn push_event(&mut self, k: usize, child_idx: usize, t: f64, new_state: usize) {
        let model = self.model;
        let ctx = &mut self.ctx;
        let c = model.children(k)[child_idx];
        let stride = self.child_stride[k][child_idx];
        let base = model.parent_config(c, &ctx.cur) - ctx.cur[k] * stride;
        let yc = ctx.cur[c];
        ctx.event_time.push(t);
        for s in 0..model.node(k).cardinality() {
            ctx.event_term.push(
                model
                    .generator(c, base + s * stride)
                    .rate(new_state, yc)
                    .ln(),
            );
        }
    }

    fn build_context(&mut self, joint: &CtbnTrajectory, k: usize) {
        self.ctx.cur.clear();
        self.ctx.cur.extend_from_slice(joint.initial_state());
        self.ctx.piece_start.clear();
        self.ctx.piece_cfg.clear();
        self.ctx.piece_pen.clear();
        self.ctx.event_time.clear();
        self.ctx.event_term.clear();
        self.ctx.t_end = joint.interval().end();
        self.push_piece(k, joint.interval().start());
        let times = joint.jump_times();
        let nodes = joint.jump_nodes();
        let states = joint.jump_states();
        for i in 0..times.len() {
            let j = nodes[i];
            if j != k {
                if let Some(ci) = self.child_pos[k][j] {
                    self.push_event(k, ci, times[i], states[i]);
                }
            }
            self.ctx.cur[j] = states[i];
            if j != k && self.in_blanket[k][j] {
                self.push_piece(k, times[i]);
            }
        }
    }

    /// Thinned events of node `k` on every (own segment x blanket piece),
    /// in time order.
    fn sample_virtual<R: Rng + ?Sized>(&mut self, own: &Trajectory, k: usize, rng: &mut R) {
        self.virt.clear();
        let ctx = &self.ctx;
        let mut q = 0;
        for seg in own.segments() {
            while ctx.piece_end(q) <= seg.start {
                q += 1;
            }
            let mut qq = q;
            loop {
                let lo = seg.start.max(ctx.piece_start[qq]);
                let hi = seg.end.min(ctx.piece_end(qq));
                if hi > lo {
                    let u = ctx.piece_cfg[qq];
                    let rate = self.omega[k][u] - self.model.generator(k, u).exit_rate(seg.state);
                    poisson_points(rng, rate, lo, hi, &mut self.virt);
                }
                if ctx.piece_end(qq) >= seg.end {
                    break;
                }
                qq += 1;
            }
        }
    }

    fn merge_grid(&mut self, own: &Trajectory) -> Result<()> {
        let real = own.jump_times();
        self.grid.clear();
        self.grid.reserve(real.len() + self.virt.len());
        let (mut i, mut j) = (0, 0);
        while i < real.len() || j < self.virt.len() {
            let take_real = match (real.get(i), self.virt.get(j)) {
                (Some(&r), Some(&v)) => {
                    if r == v {
                        return Err(Error::DuplicateTime(r));
                    }
                    r < v
                }
                (Some(_), None) => true,
                _ => false,
            };
            if take_real {
                self.grid.push(real[i]);
                i += 1;
            } else {
                self.grid.push(self.virt[j]);
                j += 1;
            }
        }
        Ok(())
    }

    fn assign_step_configs(&mut self) {
        let ctx = &self.ctx;
        self.step_cfg.clear();
        let mut q = 0;
        for &w in &self.grid {
            while q + 1 < ctx.piece_start.len() && ctx.piece_start[q + 1] <= w {
                q += 1;
            }
            self.step_cfg.push(ctx.piece_cfg[q]);
        }
    }

    /// `(|W| + 1) x n_k` window log-likelihoods: the node's own
    /// observations, minus the children's integrated exit rates, plus the
    /// log rates of the children's jumps.
    fn fill_log_likelihoods(
        &mut self,
        n_k: usize,
        obs: &DiscreteObservations,
        interval: TimeInterval,
    ) {
        let ctx = &self.ctx;
        let g = self.grid.len();
        self.loglik.clear();
        self.loglik.resize((g + 1) * n_k, 0.0);
        let n_pieces = ctx.piece_start.len();
        let (mut q, mut e) = (0, 0);
        for i in 0..=g {
            let lo = if i == 0 {
                interval.start()
            } else {
                self.grid[i - 1]
            };
            let hi = if i == g { interval.end() } else { self.grid[i] };
            let closed = i == g;
            let window = if closed {
                Window::closed(lo, hi)
            } else {
                Window::half_open(lo, hi)
            };
            let row = &mut self.loglik[i * n_k..(i + 1) * n_k];
            if !obs.is_empty() {
                obs.fill_window(window, row);
            }
            while q + 1 < n_pieces && ctx.piece_end(q) <= lo {
                q += 1;
            }
            let mut qq = q;
            while qq < n_pieces && ctx.piece_start[qq] < hi {
                let overlap = hi.min(ctx.piece_end(qq)) - lo.max(ctx.piece_start[qq]);
                if overlap > 0.0 {
                    let pen = &ctx.piece_pen[qq * n_k..(qq + 1) * n_k];
                    for (r, &p) in row.iter_mut().zip(pen) {
                        *r -= p * overlap;
                    }
                }
                qq += 1;
            }
            while e < ctx.event_time.len()
                && (ctx.event_time[e] < hi || (closed && ctx.event_time[e] <= hi))
            {
                for (r, &l) in row.iter_mut().zip(&ctx.event_term[e * n_k..(e + 1) * n_k]) {
                    *r += l;
                }
                e += 1;
            }
        }
    }

    /// The window log-likelihood table node `k` would see on the candidate
    /// grid `grid` (sorted, inside the interval), row-major by window.
    pub fn window_log_likelihoods(
        &mut self,
        joint: &CtbnTrajectory,
        k: usize,
        obs: &CtbnObservations,
        grid: &[f64],
    ) -> Vec<f64> {
        self.build_context(joint, k);
        self.grid.clear();
        self.grid.extend_from_slice(grid);
        self.fill_log_likelihoods(
            self.model.node(k).cardinality(),
            obs.node(k),
            joint.interval(),
        );
        self.loglik.clone()
    }

    /// Resamples the path of node `k` given everything else.
    pub fn update_node<R: Rng + ?Sized>(
        &mut self,
        joint: &CtbnTrajectory,
        k: usize,
        obs: &CtbnObservations,
        rng: &mut R,
    ) -> Result<CtbnTrajectory> {
        let model = self.model;
        let n_k = model.node(k).cardinality();
        let own = joint.node_path(k);
        self.build_context(joint, k);
        self.sample_virtual(&own, k, rng);
        self.merge_grid(&own)?;
        self.assign_step_configs();
        self.fill_log_likelihoods(n_k, obs.node(k), joint.interval());
        model.initial_conditional(k, joint.initial_state(), &mut self.prior);
        let steps = NodeSteps {
            ops: &self.ops[k],
            gens: model.node(k).generators(),
            cfg: &self.step_cfg,
            n: n_k,
        };
        let sample = self.ws.sample(&self.prior, &steps, &self.loglik, rng)?;
        self.steps_done += self.grid.len() as u64 + 1;

        let mut new_t = Vec::new();
        let mut new_s = Vec::new();
        let mut prev = sample.states[0];
        for (&w, &s) in self.grid.iter().zip(&sample.states[1..]) {
            if s != prev {
                new_t.push(w);
                new_s.push(s);
                prev = s;
            }
        }
        splice(joint, k, sample.states[0], &new_t, &new_s)
    }

    /// Updates every node once, in ascending order.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        joint: &CtbnTrajectory,
        obs: &CtbnObservations,
        rng: &mut R,
    ) -> Result<CtbnTrajectory> {
        let mut cur = self.update_node(joint, 0, obs, rng)?;
        for k in 1..self.model.n_nodes() {
            cur = self.update_node(&cur, k, obs, rng)?;
        }
        Ok(cur)
    }

    /// Updates every node once, in a fresh random order.
    pub fn sweep_random_scan<R: Rng + ?Sized>(
        &mut self,
        joint: &CtbnTrajectory,
        obs: &CtbnObservations,
        rng: &mut R,
    ) -> Result<CtbnTrajectory> {
        let mut order: Vec<usize> = (0..self.model.n_nodes()).collect();
        order.shuffle(rng);
        let mut cur = joint.clone();
        for k in order {
            cur = self.update_node(&cur, k, obs, rng)?;
        }
        Ok(cur)
    }
}

/// Replaces node `k`'s path inside `joint`.
fn splice(
    joint: &CtbnTrajectory,
    k: usize,
    s0k: usize,
    times: &[f64],
    states: &[usize],
) -> Result<CtbnTrajectory> {
    let mut s0 = joint.initial_state().to_vec();
    s0[k] = s0k;
    let others = joint.jump_nodes().iter().filter(|&&j| j != k).count();
    let total = others + times.len();
    let mut out_t = Vec::with_capacity(total);
    let mut out_k = Vec::with_capacity(total);
    let mut out_s = Vec::with_capacity(total);
    let mut i = 0;
    for ((&t, &j), &s) in joint
        .jump_times()
        .iter()
        .zip(joint.jump_nodes())
        .zip(joint.jump_states())
    {
        if j == k {
            continue;
        }
        while i < times.len() && times[i] < t {
            out_t.push(times[i]);
            out_k.push(k);
            out_s.push(states[i]);
            i += 1;
        }
        if i < times.len() && times[i] == t {
            return Err(Error::DuplicateTime(t));
        }
        out_t.push(t);
        out_k.push(j);
        out_s.push(s);
    }
    for (&t, &s) in times[i..].iter().zip(&states[i..]) {
        out_t.push(t);
        out_k.push(k);
        out_s.push(s);
    }
    CtbnTrajectory::new(s0, out_t, out_k, out_s, joint.interval())
}

/// One node update with a fresh [`CtbnGibbs`].
pub fn node_gibbs_kernel<R: Rng + ?Sized>(
    joint: &CtbnTrajectory,
    k: usize,
    model: &CtbnModel,
    obs: &CtbnObservations,
    multiplier: OmegaMultiplier,
    rng: &mut R,
) -> Result<CtbnTrajectory> {
    model.check_trajectory(joint)?;
    CtbnGibbs::new(model, multiplier).update_node(joint, k, obs, rng)
}

/// One fixed-order sweep with a fresh [`CtbnGibbs`].
pub fn ctbn_gibbs_sweep<R: Rng + ?Sized>(
    joint: &CtbnTrajectory,
    model: &CtbnModel,
    obs: &CtbnObservations,
    multiplier: OmegaMultiplier,
    rng: &mut R,
) -> Result<CtbnTrajectory> {
    model.check_trajectory(joint)?;
    CtbnGibbs::new(model, multiplier).sweep(joint, obs, rng)
}

/// A starting path with nonzero likelihood.
///
/// The initial state is drawn from `pi_0` reweighted by observations at
/// `t_start`, the rest of the path from the prior. If that path conflicts
/// with later observations, a few node-wise sweeps pull it into the
/// support, skipping node updates that are infeasible given the current
/// neighbours.
pub fn ctbn_initial_trajectory<R: Rng + ?Sized>(
    model: &CtbnModel,
    obs: &CtbnObservations,
    interval: TimeInterval,
    multiplier: OmegaMultiplier,
    rng: &mut R,
) -> Result<CtbnTrajectory> {
    let t0 = interval.start();
    let at_start = Window::closed(t0, t0);
    let s0 = model
        .sample_initial_weighted(|k, s| obs.node(k).window_log_likelihood(s, at_start), rng)?;
    let mut traj = ctbn_simulate_from(model, s0, interval, rng);
    if obs.log_likelihood(&traj) > f64::NEG_INFINITY {
        return Ok(traj);
    }
    let mut kernel = CtbnGibbs::new(model, multiplier);
    for _ in 0..INIT_SWEEPS {
        for k in 0..model.n_nodes() {
            match kernel.update_node(&traj, k, obs, rng) {
                Ok(t) => traj = t,
                Err(Error::ImpossibleData { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if obs.log_likelihood(&traj) > f64::NEG_INFINITY {
            return Ok(traj);
        }
    }
    Err(Error::InvalidObservations(
        "no path consistent with the observations was found".into(),
    ))
}

/// Settings for a node-wise CTBN chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CtbnGibbsConfig {
    pub omega_multiplier: OmegaMultiplier,
    pub n_burnin: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Visit nodes in a fresh random order every sweep.
    pub random_scan: bool,
}

impl Default for CtbnGibbsConfig {
    fn default() -> Self {
        Self {
            omega_multiplier: OmegaMultiplier::default(),
            n_burnin: 100,
            n_samples: 1000,
            seed: 0,
            random_scan: false,
        }
    }
}

/// Runs `n_burnin + n_samples` sweeps and calls `on_sample` with every
/// post-burn-in path. Starts from `init`, or from
/// [`ctbn_initial_trajectory`] drawn with the chain's generator.
pub fn run_ctbn_chain_with<F>(
    model: &CtbnModel,
    obs: &CtbnObservations,
    interval: TimeInterval,
    init: Option<&CtbnTrajectory>,
    config: &CtbnGibbsConfig,
    mut on_sample: F,
) -> Result<CtbnTrajectory>
where
    F: FnMut(usize, &CtbnTrajectory),
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut traj = match init {
        Some(t) => {
            model.check_trajectory(t)?;
            t.clone()
        }
        None => ctbn_initial_trajectory(model, obs, interval, config.omega_multiplier, &mut rng)?,
    };
    let mut kernel = CtbnGibbs::new(model, config.omega_multiplier);
    for i in 0..config.n_burnin + config.n_samples {
        traj = if config.random_scan {
            kernel.sweep_random_scan(&traj, obs, &mut rng)?
        } else {
            kernel.sweep(&traj, obs, &mut rng)?
        };
        if i >= config.n_burnin {
            on_sample(i - config.n_burnin, &traj);
        }
    }
    Ok(traj)
}
