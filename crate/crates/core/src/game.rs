//! Discrete lower and upper game values on a state-keyed tree.
//!
//! Every node branches over all control pairs and noise outcomes; children
//! with equal state (and, for discrete-random problems, equal noise history)
//! are merged, so problems with state-free coefficients recombine.
//! The lower value is `max_theta min_gamma` of the one-step BSDE operator and
//! the upper value `min_gamma max_theta`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bsde::implicit_step;
use crate::error::{Error, Result};
use crate::grid::{step_outcomes, Branching, Outcome, TimeGrid};
use crate::hamiltonian::{max_min, min_max};
use crate::problem::{DriftFn, DriverFn, DriverInput, ProblemSpec, Randomness};
use crate::sde::{euler_step, lattice_forward, ControlProcess, StateTree, TreeStart};

pub const GAME_NODE_BUDGET: u64 = 2_000_000;

const KEY_SCALE: f64 = (1u64 << 40) as f64;

fn quantize(v: f64) -> i64 {
    (v * KEY_SCALE).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Default)]
struct GameSlice {
    states: Vec<f64>,
    w: Vec<f64>,
    hist: Vec<f64>,
    /// `children[(node * pairs + pair) * outcomes + o]`.
    children: Vec<u32>,
    index: HashMap<Vec<i64>, u32>,
    /// Nodes sorted by the first signature coordinate.
    order: Vec<u32>,
}

/// Game tree from a single initial state at slice `start`.
#[derive(Debug, Clone)]
pub struct GameTree {
    grid: TimeGrid,
    start: usize,
    d: usize,
    m: usize,
    hist_len: usize,
    n_theta: usize,
    n_gamma: usize,
    keyed_noise: bool,
    outcomes: Vec<Outcome>,
    slices: Vec<GameSlice>,
    hash: String,
}

impl GameTree {
    pub fn build(spec: &ProblemSpec, grid: TimeGrid, branching: usize, start: usize, x0: &[f64]) -> Result<Self> {
        Self::build_with_budget(spec, grid, branching, start, x0, GAME_NODE_BUDGET)
    }

    pub fn build_with_budget(spec: &ProblemSpec, grid: TimeGrid, branching: usize, start: usize, x0: &[f64], budget: u64) -> Result<Self> {
        let (d, m) = (spec.d(), spec.m());
        if x0.len() != d {
            return Err(Error::invalid("initial state has the wrong dimension"));
        }
        let n = grid.n_steps();
        if start > n {
            return Err(Error::invalid(format!("start slice {start} beyond {n}")));
        }
        let outcomes = step_outcomes(Branching::from_count(branching)?, m, grid.dt());
        let (n_theta, n_gamma) = (spec.theta_grid().len(), spec.gamma_grid().len());
        let pairs = n_theta * n_gamma;
        let hist_len = spec.history_len();
        let keyed_noise = matches!(spec.randomness(), Randomness::DiscreteRandom { .. });
        let dt = grid.dt();

        let mut root_hist = vec![0.0; hist_len];
        let w0 = vec![0.0; m];
        spec.update_history(grid.time(start), &w0, &mut root_hist);
        let mut root = GameSlice { states: x0.to_vec(), w: w0, hist: root_hist, ..Default::default() };
        root.index.insert(signature_key(x0, &root.w, &root.hist, keyed_noise), 0);
        root.order = vec![0];
        let mut slices = vec![root];
        let mut total: u64 = 1;
        let mut scratch = vec![0.0; d + d * m];
        let mut x_next = vec![0.0; d];
        for k in start..n {
            let t = grid.time(k);
            let mut next = GameSlice::default();
            let cur = slices.last_mut().expect("slice");
            let count = cur.states.len() / d;
            cur.children = Vec::with_capacity(count * pairs * outcomes.len());
            for i in 0..count {
                let x = &cur.states[i * d..(i + 1) * d];
                let w = &cur.w[i * m..(i + 1) * m];
                let h = &cur.hist[i * hist_len..(i + 1) * hist_len];
                for th in 0..n_theta {
                    for ga in 0..n_gamma {
                        let (tp, gp) = (spec.theta_grid().point(th), spec.gamma_grid().point(ga));
                        for o in &outcomes {
                            euler_step(spec, t, dt, x, tp, gp, h, &o.dw, &mut scratch, &mut x_next);
                            if x_next.iter().any(|v| !v.is_finite()) {
                                return Err(Error::NonFinite { what: "state update", location: format!("slice {k}, node {i}") });
                            }
                            let wn: Vec<f64> = w.iter().zip(&o.dw).map(|(a, b)| a + b).collect();
                            let mut hn = h.to_vec();
                            spec.update_history(grid.time(k + 1), &wn, &mut hn);
                            let key = signature_key(&x_next, &wn, &hn, keyed_noise);
                            let id = match next.index.get(&key) {
                                Some(&id) => id,
                                None => {
                                    let id = (next.states.len() / d) as u32;
                                    total += 1;
                                    if total > budget {
                                        return Err(Error::Budget { required: total, budget });
                                    }
                                    next.states.extend_from_slice(&x_next);
                                    next.w.extend_from_slice(&wn);
                                    next.hist.extend_from_slice(&hn);
                                    next.index.insert(key, id);
                                    id
                                }
                            };
                            cur.children.push(id);
                        }
                    }
                }
            }
            let len = next.states.len() / d;
            let mut order: Vec<u32> = (0..len as u32).collect();
            order.sort_by(|&a, &b| next.states[a as usize * d].total_cmp(&next.states[b as usize * d]));
            next.order = order;
            slices.push(next);
        }
        let mut hasher = Sha256::new();
        hasher.update(spec.descriptor().as_bytes());
        hasher.update(format!("{:?}|{branching}|{start}|{x0:?}", grid).as_bytes());
        let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(GameTree { grid, start, d, m, hist_len, n_theta, n_gamma, keyed_noise, outcomes, slices, hash })
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn pairs(&self) -> (usize, usize) {
        (self.n_theta, self.n_gamma)
    }

    pub fn slice_len(&self, k: usize) -> usize {
        self.slices[k - self.start].states.len() / self.d
    }

    pub fn node_count(&self) -> usize {
        (self.start..=self.grid.n_steps()).map(|k| self.slice_len(k)).sum()
    }

    pub fn state(&self, k: usize, i: usize) -> &[f64] {
        &self.slices[k - self.start].states[i * self.d..(i + 1) * self.d]
    }

    pub fn w(&self, k: usize, i: usize) -> &[f64] {
        &self.slices[k - self.start].w[i * self.m..(i + 1) * self.m]
    }

    pub fn history(&self, k: usize, i: usize) -> &[f64] {
        &self.slices[k - self.start].hist[i * self.hist_len..(i + 1) * self.hist_len]
    }

    pub fn child(&self, k: usize, i: usize, th: usize, ga: usize, o: usize) -> usize {
        let b = self.outcomes.len();
        self.slices[k - self.start].children[((i * self.n_theta + th) * self.n_gamma + ga) * b + o] as usize
    }

    /// Node of slice `k` with the given state and noise data: exact key match,
    /// else the nearest signature.
    pub fn locate(&self, k: usize, x: &[f64], w: &[f64], hist: &[f64]) -> usize {
        let slice = &self.slices[k - self.start];
        if let Some(&id) = slice.index.get(&signature_key(x, w, hist, self.keyed_noise)) {
            return id as usize;
        }
        let dist = |i: usize| -> f64 {
            let mut s: f64 = x.iter().zip(self.state(k, i)).map(|(a, b)| (a - b) * (a - b)).sum();
            if self.keyed_noise {
                s += w.iter().zip(self.w(k, i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                s += hist.iter().zip(self.history(k, i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            s
        };
        let first = |i: u32| slice.states[i as usize * self.d];
        let pos = slice.order.partition_point(|&i| first(i) < x[0]);
        let mut best = (f64::INFINITY, 0usize);
        let mut lo = pos;
        let mut hi = pos;
        loop {
            let mut moved = false;
            if hi < slice.order.len() {
                let i = slice.order[hi] as usize;
                let gap = first(slice.order[hi]) - x[0];
                if gap * gap <= best.0 {
                    let dd = dist(i);
                    if dd < best.0 || (dd == best.0 && i < best.1) {
                        best = (dd, i);
                    }
                    hi += 1;
                    moved = true;
                }
            }
            if lo > 0 {
                let i = slice.order[lo - 1] as usize;
                let gap = x[0] - first(slice.order[lo - 1]);
                if gap * gap <= best.0 {
                    let dd = dist(i);
                    if dd < best.0 || (dd == best.0 && i < best.1) {
                        best = (dd, i);
                    }
                    lo -= 1;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        best.1
    }
}

fn signature_key(x: &[f64], w: &[f64], hist: &[f64], keyed_noise: bool) -> Vec<i64> {
    let mut key: Vec<i64> = x.iter().map(|&v| quantize(v)).collect();
    if keyed_noise {
        key.extend(w.iter().map(|&v| quantize(v)));
        key.extend(hist.iter().map(|&v| quantize(v)));
    }
    key
}

/// Optimizing choice at a node. Lower: `outer` is `theta*` and `response[theta]`
/// the minimizing `gamma`. Upper: `outer` is `gamma*` and `response[gamma]` the
/// maximizing `theta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyEntry {
    pub outer: u32,
    pub response: Vec<u32>,
}

impl PolicyEntry {
    /// `(theta, gamma)` played at the node under the stored profile.
    pub fn pair(&self, side: Side) -> (usize, usize) {
        let outer = self.outer as usize;
        let resp = self.response[outer] as usize;
        match side {
            Side::Lower => (outer, resp),
            Side::Upper => (resp, outer),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub side: Side,
    pub start: usize,
    /// `values[k - start][node]`.
    pub values: Vec<Vec<f64>>,
    /// `policy[k - start][node]` for non-terminal slices.
    pub policy: Vec<Vec<PolicyEntry>>,
    pub spec_hash: String,
    pub tree_hash: String,
    pub max_residual: f64,
}

impl ValueField {
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.values[k - self.start][i]
    }

    pub fn check_provenance(&self, spec: &ProblemSpec, tree: &GameTree) -> Result<()> {
        if self.tree_hash != tree.hash || self.spec_hash != spec.spec_hash() {
            return Err(Error::ProvenanceMismatch("value field was computed on a different tree or problem".into()));
        }
        Ok(())
    }

    pub fn root(&self) -> f64 {
        self.values[0][0]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    /// Value at an arbitrary state through [`GameTree::locate`].
    pub fn lookup(&self, tree: &GameTree, k: usize, x: &[f64], w: &[f64], hist: &[f64]) -> f64 {
        self.at(k, tree.locate(k, x, w, hist))
    }
}

fn one_step_table(spec: &ProblemSpec, tree: &GameTree, next: &[f64], k: usize, i: usize, f: &DriverFn) -> Result<(Vec<f64>, f64)> {
    let (nt, ng) = tree.pairs();
    let dt = tree.grid.dt();
    let t = tree.grid.time(k);
    let (x, h) = (tree.state(k, i), tree.history(k, i));
    let mut table = Vec::with_capacity(nt * ng);
    let mut worst: f64 = 0.0;
    for th in 0..nt {
        for ga in 0..ng {
            let mut e = 0.0;
            let mut z = vec![0.0; tree.m];
            for (o, out) in tree.outcomes.iter().enumerate() {
                let v = next[tree.child(k, i, th, ga, o)];
                e += out.prob * v;
                for j in 0..tree.m {
                    z[j] += out.prob * v * out.dw[j];
                }
            }
            z.iter_mut().for_each(|c| *c /= dt);
            let (tp, gp) = (spec.theta_grid().point(th), spec.gamma_grid().point(ga));
            let (y, r) = implicit_step(e, dt, |y| f(&DriverInput { t, x, y, z: &z, theta: tp, gamma: gp, hist: h }))
                .map_err(|_| Error::NonFinite { what: "driver", location: format!("slice {k}, node {i}") })?;
            worst = worst.max(r);
            table.push(y);
        }
    }
    Ok((table, worst))
}

/// Backward induction of the lower or upper value over the whole tree.
pub fn solve_value(spec: &ProblemSpec, tree: &GameTree, side: Side) -> Result<ValueField> {
    spec.check_step(&tree.grid)?;
    let n = tree.grid.n_steps();
    let span = n - tree.start;
    let (nt, ng) = tree.pairs();
    let f = spec.driver_fn();
    let mut values = vec![Vec::new(); span + 1];
    let mut policy = vec![Vec::new(); span];
    values[span] = (0..tree.slice_len(n)).map(|i| spec.terminal(tree.state(n, i), tree.history(n, i))).collect();
    let mut max_residual: f64 = 0.0;
    for k in (tree.start..n).rev() {
        let next = &values[k + 1 - tree.start];
        let solved: Vec<(f64, PolicyEntry, f64)> = (0..tree.slice_len(k))
            .into_par_iter()
            .map(|i| {
                let (table, r) = one_step_table(spec, tree, next, k, i, &*f)?;
                let (v, entry) = match side {
                    Side::Lower => {
                        let s = max_min(&table, nt, ng);
                        (s.value, PolicyEntry { outer: s.theta as u32, response: s.gamma_response.iter().map(|&g| g as u32).collect() })
                    }
                    Side::Upper => {
                        let s = min_max(&table, nt, ng);
                        (s.value, PolicyEntry { outer: s.gamma as u32, response: s.theta_response.iter().map(|&g| g as u32).collect() })
                    }
                };
                Ok((v, entry, r))
            })
            .collect::<Result<_>>()?;
        let mut vk = Vec::with_capacity(solved.len());
        let mut pk = Vec::with_capacity(solved.len());
        for (v, p, r) in solved {
            vk.push(v);
            pk.push(p);
            max_residual = max_residual.max(r);
        }
        values[k - tree.start] = vk;
        policy[k - tree.start] = pk;
    }
    Ok(ValueField { side, start: tree.start, values, policy, spec_hash: spec.spec_hash(), tree_hash: tree.hash.clone(), max_residual })
}

/// Max nodewise `|V - U|` of two fields on the same tree, and the count of
/// nodes with `V > U + 1e-10`.
pub fn lower_upper_gap(lower: &ValueField, upper: &ValueField) -> Result<(f64, usize)> {
    if lower.tree_hash != upper.tree_hash {
        return Err(Error::ProvenanceMismatch("fields live on different trees".into()));
    }
    let mut gap: f64 = 0.0;
    let mut inverted = 0;
    for (a, b) in lower.values.iter().flatten().zip(upper.values.iter().flatten()) {
        gap = gap.max((a - b).abs());
        if *a > b + 1e-10 {
            inverted += 1;
        }
    }
    Ok((gap, inverted))
}

/// `y = e + dt g(y)` by bisection alone, bracketed with the Lipschitz bound.
fn bisect_step(e: f64, dt: f64, l: f64, g: impl Fn(f64) -> f64) -> f64 {
    let h = |y: f64| y - e - dt * g(y);
    let radius = dt * g(e).abs() / (1.0 - dt * l).max(1e-3) + 1e-12 * (1.0 + e.abs());
    let (mut lo, mut hi) = (e - radius, e + radius);
    while h(lo) > 0.0 {
        lo -= radius.max(1e-12);
    }
    while h(hi) < 0.0 {
        hi += radius.max(1e-12);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if h(lo).abs() <= h(hi).abs() {
        lo
    } else {
        hi
    }
}

struct Extensive<'a> {
    spec: &'a ProblemSpec,
    tree: &'a GameTree,
    field: &'a ValueField,
    end: usize,
    side: Side,
}

impl Extensive<'_> {
    /// Game value between slice `k` and `end` from `(x, w, hist)`, expanding
    /// every control pair and outcome with no sharing of subtrees.
    fn value(&self, k: usize, x: &[f64], w: &[f64], hist: &[f64]) -> f64 {
        if k == self.end {
            return self.field.lookup(self.tree, k, x, w, hist);
        }
        let spec = self.spec;
        let grid = self.tree.grid;
        let (dt, t) = (grid.dt(), grid.time(k));
        let (d, m) = (spec.d(), spec.m());
        let (nt, ng) = self.tree.pairs();
        let mut scratch = vec![0.0; d + d * m];
        let mut best_outer = match self.side {
            Side::Lower => f64::NEG_INFINITY,
            Side::Upper => f64::INFINITY,
        };
        let (n_out, n_in) = match self.side {
            Side::Lower => (nt, ng),
            Side::Upper => (ng, nt),
        };
        for a in 0..n_out {
            let mut best_inner = match self.side {
                Side::Lower => f64::INFINITY,
                Side::Upper => f64::NEG_INFINITY,
            };
            for b in 0..n_in {
                let (th, ga) = match self.side {
                    Side::Lower => (a, b),
                    Side::Upper => (b, a),
                };
                let (tp, gp) = (spec.theta_grid().point(th), spec.gamma_grid().point(ga));
                let mut e = 0.0;
                let mut z = vec![0.0; m];
                for o in &self.tree.outcomes {
                    let mut xn = vec![0.0; d];
                    euler_step(spec, t, dt, x, tp, gp, hist, &o.dw, &mut scratch, &mut xn);
                    let wn: Vec<f64> = w.iter().zip(&o.dw).map(|(a, b)| a + b).collect();
                    let mut hn = hist.to_vec();
                    spec.update_history(grid.time(k + 1), &wn, &mut hn);
                    let v = self.value(k + 1, &xn, &wn, &hn);
                    e += o.prob * v;
                    for j in 0..m {
                        z[j] += o.prob * v * o.dw[j] / dt;
                    }
                }
                let y = bisect_step(e, dt, spec.lipschitz(), |y| {
                    spec.driver(&DriverInput { t, x, y, z: &z, theta: tp, gamma: gp, hist })
                });
                best_inner = match self.side {
                    Side::Lower => best_inner.min(y),
                    Side::Upper => best_inner.max(y),
                };
            }
            best_outer = match self.side {
                Side::Lower => best_outer.max(best_inner),
                Side::Upper => best_outer.min(best_inner),
            };
        }
        best_outer
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppReport {
    pub max_residual: f64,
    pub nodes_checked: usize,
}

/// Largest number of slices the extensive-form check expands.
pub const DPP_MAX_SPAN: usize = 6;

/// `max |V_j - (inner game from j to k with terminal V_k)|` over up to
/// `max_nodes` evenly spaced nodes of slice `j`. The inner game is expanded in
/// extensive form with its own one-step solver.
pub fn dpp_residual(spec: &ProblemSpec, tree: &GameTree, field: &ValueField, j: usize, k: usize, max_nodes: usize) -> Result<DppReport> {
    field.check_provenance(spec, tree)?;
    if !(tree.start <= j && j < k && k <= tree.grid.n_steps()) {
        return Err(Error::invalid(format!("need start <= j < k <= n, got j={j}, k={k}")));
    }
    if k - j > DPP_MAX_SPAN {
        return Err(Error::invalid(format!("extensive-form check limited to {DPP_MAX_SPAN} slices")));
    }
    let ext = Extensive { spec, tree, field, end: k, side: field.side };
    let len = tree.slice_len(j);
    let count = len.min(max_nodes.max(1));
    let nodes: Vec<usize> = (0..count).map(|c| c * len / count).collect();
    let worst = nodes
        .par_iter()
        .map(|&i| (field.at(j, i) - ext.value(j, tree.state(j, i), tree.w(j, i), tree.history(j, i))).abs())
        .reduce(|| 0.0, f64::max);
    Ok(DppReport { max_residual: worst, nodes_checked: count })
}

/// Greedy profile read off a value field, with its measured suboptimality.
#[derive(Debug, Clone)]
pub struct StrategyProfile {
    pub side: Side,
    /// Maximum over nodes of `|J - V|` for the profile.
    pub epsilon: f64,
    pub payoff: f64,
    pub value: f64,
}

/// Feedback control that plays the stored pair of the located node.
pub fn feedback_from_field(tree: &GameTree, field: &ValueField) -> ControlProcess {
    let tree = tree.clone();
    let policy = field.policy.clone();
    let side = field.side;
    let start = field.start;
    let m = tree.m;
    ControlProcess::feedback(move |k, x, hist| {
        let w = vec![0.0; m];
        let i = tree.locate(k, x, &w, hist);
        policy[k - start][i].pair(side)
    })
}

/// Evaluates the greedy profile by simulating it on a separate state tree and
/// solving the payoff BSDE there.
pub fn extract_epsilon_optimal(spec: &ProblemSpec, tree: &GameTree, field: &ValueField, branching: usize) -> Result<StrategyProfile> {
    if spec.history_len() > 0 {
        return Err(Error::invalid("profile evaluation needs a Markovian problem"));
    }
    let lat = crate::grid::build_lattice(tree.grid, spec.m(), branching)?;
    let ctl = feedback_from_field(tree, field);
    let x0 = tree.state(tree.start, 0).to_vec();
    let st: StateTree = lattice_forward(spec, &lat, &TreeStart::at(spec, tree.start, x0), &ctl)?;
    let sol = crate::bsde::solve_lattice(spec, &st, &st.terminal_values(spec), None)?;
    let n = tree.grid.n_steps();
    let zero_w = vec![0.0; spec.m()];
    let mut eps: f64 = 0.0;
    for k in tree.start..=n {
        for i in 0..st.slice(k).weights.len() {
            let v = field.lookup(tree, k, st.state(k, i), &zero_w, st.history(k, i));
            eps = eps.max((sol.y_at(k)[i] - v).abs());
        }
    }
    Ok(StrategyProfile { side: field.side, epsilon: eps, payoff: sol.root(), value: field.root() })
}

/// Monte Carlo evaluation of the greedy feedback profile: Euler paths driven
/// by Gaussian increments on the tree's time grid, payoff BSDE by regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMcReport {
    pub mc_value: f64,
    pub se: f64,
    pub lattice_value: f64,
}

impl PolicyMcReport {
    /// `|V_mc - V_lattice|` in bootstrap standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mc_value - self.lattice_value).abs() / self.se
    }
}

pub fn lsmc_policy_check(spec: &ProblemSpec, tree: &GameTree, field: &ValueField, n_paths: usize, config: crate::bsde::LsmcConfig) -> Result<PolicyMcReport> {
    if spec.history_len() > 0 {
        return Err(Error::invalid("policy evaluation needs a Markovian problem"));
    }
    field.check_provenance(spec, tree)?;
    let ens = crate::grid::sample_paths(tree.grid, spec.m(), n_paths, config.seed)?;
    let x0 = tree.state(tree.start, 0).to_vec();
    let traj = crate::sde::euler_forward(spec, &ens, tree.start, &crate::sde::StartState::Point(x0), &feedback_from_field(tree, field))?;
    let n = tree.grid.n_steps();
    let eta: Vec<f64> = (0..n_paths).map(|p| spec.terminal(traj.state(p, n), traj.history(p, n))).collect();
    let sol = crate::bsde::solve_lsmc(spec, &traj, &ens, tree.start, n, &eta, None, config)?;
    Ok(PolicyMcReport { mc_value: sol.y0, se: sol.se, lattice_value: field.root() })
}

/// Largest one-shot deviation gains at random nodes: the maximizer switching
/// to any `theta` against the stored response, and the minimizer switching to
/// any `gamma` against the stored outer choice (lower field).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub maximizer_gain: f64,
    pub minimizer_gain: f64,
    pub nodes: usize,
}

pub fn deviation_check(spec: &ProblemSpec, tree: &GameTree, field: &ValueField, nodes: usize, seed: u64) -> Result<DeviationReport> {
    let n = tree.grid.n_steps();
    let f = spec.driver_fn();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nt, ng) = tree.pairs();
    let mut rep = DeviationReport { maximizer_gain: f64::NEG_INFINITY, minimizer_gain: f64::NEG_INFINITY, nodes };
    for _ in 0..nodes {
        let k = rng.random_range(tree.start..n);
        let i = rng.random_range(0..tree.slice_len(k));
        let (table, _) = one_step_table(spec, tree, &field.values[k + 1 - tree.start], k, i, &*f)?;
        let v = field.at(k, i);
        let entry = &field.policy[k - tree.start][i];
        match field.side {
            Side::Lower => {
                for th in 0..nt {
                    let g = entry.response[th] as usize;
                    rep.maximizer_gain = rep.maximizer_gain.max(table[th * ng + g] - v);
                }
                let th = entry.outer as usize;
                for g in 0..ng {
                    rep.minimizer_gain = rep.minimizer_gain.max(v - table[th * ng + g]);
                }
            }
            Side::Upper => {
                for g in 0..ng {
                    let th = entry.response[g] as usize;
                    rep.minimizer_gain = rep.minimizer_gain.max(v - table[th * ng + g]);
                }
                let g = entry.outer as usize;
                for th in 0..nt {
                    rep.maximizer_gain = rep.maximizer_gain.max(table[th * ng + g] - v);
                }
            }
        }
    }
    Ok(rep)
}

/// Value at `(t_start, x)` from a fresh tree.
pub fn value_at(spec: &ProblemSpec, grid: TimeGrid, branching: usize, start: usize, x: &[f64], side: Side) -> Result<f64> {
    let tree = GameTree::build(spec, grid, branching, start, x)?;
    Ok(solve_value(spec, &tree, side)?.root())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub sup_abs: f64,
    /// `L (T + 1)`.
    pub bound: f64,
    /// Max `|V(t0, x_i) - V(t0, x_{i+1})| / |x_i - x_{i+1}|` over consecutive probes.
    pub lipschitz: f64,
    /// Max `|V(t0, x) - V(t1, x)| / sqrt(dt)` over probes.
    pub time_modulus: f64,
}

/// Re-solves from every probe state at slices 0 and 1.
pub fn regularity_suite(spec: &ProblemSpec, n_steps: usize, branching: usize, probes: &[Vec<f64>], side: Side) -> Result<RegularityReport> {
    let grid = TimeGrid::new(0.0, spec.horizon(), n_steps)?;
    let mut sup_abs: f64 = 0.0;
    let mut v0 = Vec::with_capacity(probes.len());
    let mut time_modulus: f64 = 0.0;
    for x in probes {
        let tree = GameTree::build(spec, grid, branching, 0, x)?;
        let field = solve_value(spec, &tree, side)?;
        sup_abs = sup_abs.max(field.sup_abs());
        let v1 = value_at(spec, grid, branching, 1, x, side)?;
        time_modulus = time_modulus.max((field.root() - v1).abs() / grid.dt().sqrt());
        v0.push(field.root());
    }
    let mut lipschitz: f64 = 0.0;
    for i in 1..probes.len() {
        let dist = probes[i].iter().zip(&probes[i - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        lipschitz = lipschitz.max((v0[i] - v0[i - 1]).abs() / dist);
    }
    Ok(RegularityReport { sup_abs, bound: spec.lipschitz() * (spec.horizon() + 1.0), lipschitz, time_modulus })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub eps: f64,
    pub drift: f64,
}

/// Sup over probes of `|V^eps(0, x) - V(0, x)|` for `b + eps b~`, `f + eps f~`.
#[allow(clippy::too_many_arguments)]
pub fn stability_suite(
    spec: &ProblemSpec,
    b_tilde: std::sync::Arc<DriftFn>,
    f_tilde: std::sync::Arc<DriverFn>,
    eps: &[f64],
    n_steps: usize,
    branching: usize,
    probes: &[Vec<f64>],
    side: Side,
) -> Result<Vec<StabilityPoint>> {
    let grid = TimeGrid::new(0.0, spec.horizon(), n_steps)?;
    let base: Vec<f64> = probes.iter().map(|x| value_at(spec, grid, branching, 0, x, side)).collect::<Result<_>>()?;
    eps.iter()
        .map(|&e| {
            let pert = spec.perturbed(e, b_tilde.clone(), f_tilde.clone());
            let mut drift: f64 = 0.0;
            for (x, v) in probes.iter().zip(&base) {
                drift = drift.max((value_at(&pert, grid, branching, 0, x, side)? - v).abs());
            }
            Ok(StabilityPoint { eps: e, drift })
        })
        .collect()
}
