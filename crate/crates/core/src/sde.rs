//! Forward Euler–Maruyama simulation of the controlled state equation on path
//! ensembles and on non-recombining noise trees.
//!
//! Controls act on `[t_k, t_{k+1})` and may only read information available
//! at `t_k`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Filtration, NoiseLattice, Outcome, PathEnsemble, TimeGrid};
use crate::problem::{CoeffInput, ProblemSpec};

pub type FeedbackFn = dyn Fn(usize, &[f64], &[f64]) -> (usize, usize) + Send + Sync;

/// Control pair as indices into the problem's `theta` and `gamma` grids.
#[derive(Clone)]
pub enum ControlProcess {
    Constant { theta: usize, gamma: usize },
    /// Per path and step, `[path * n_steps + k]`.
    OpenLoop { theta: Vec<usize>, gamma: Vec<usize> },
    /// Pure map `(k, x, history) -> (theta, gamma)`.
    Feedback(Arc<FeedbackFn>),
}

impl fmt::Debug for ControlProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlProcess::Constant { theta, gamma } => {
                write!(f, "Constant({theta}, {gamma})")
            }
            ControlProcess::OpenLoop { theta, .. } => write!(f, "OpenLoop({} entries)", theta.len()),
            ControlProcess::Feedback(_) => write!(f, "Feedback"),
        }
    }
}

impl ControlProcess {
    pub fn constant(theta: usize, gamma: usize) -> Self {
        ControlProcess::Constant { theta, gamma }
    }

    pub fn feedback(f: impl Fn(usize, &[f64], &[f64]) -> (usize, usize) + Send + Sync + 'static) -> Self {
        ControlProcess::Feedback(Arc::new(f))
    }

    fn at(&self, path: usize, n_steps: usize, k: usize, x: &[f64], hist: &[f64]) -> (usize, usize) {
        match self {
            ControlProcess::Constant { theta, gamma } => (*theta, *gamma),
            ControlProcess::OpenLoop { theta, gamma } => {
                (theta[path * n_steps + k], gamma[path * n_steps + k])
            }
            ControlProcess::Feedback(f) => f(k, x, hist),
        }
    }
}

fn check_indices(spec: &ProblemSpec, (th, ga): (usize, usize)) -> Result<()> {
    if th >= spec.theta_grid().len() || ga >= spec.gamma_grid().len() {
        Err(Error::invalid(format!("control index ({th}, {ga}) outside the control grids")))
    } else {
        Ok(())
    }
}

/// One Euler–Maruyama step; writes `x + b dt + sigma dw` into `out`.
#[allow(clippy::too_many_arguments)]
pub fn euler_step(
    spec: &ProblemSpec,
    t: f64,
    dt: f64,
    x: &[f64],
    theta: &[f64],
    gamma: &[f64],
    hist: &[f64],
    dw: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let (d, m) = (spec.d(), spec.m());
    let inp = CoeffInput { t, x, theta, gamma, hist };
    let (b, s) = scratch.split_at_mut(d);
    spec.drift(&inp, b);
    spec.diffusion(&inp, &mut s[..d * m]);
    for i in 0..d {
        let mut v = x[i] + b[i] * dt;
        for j in 0..m {
            v += s[i * m + j] * dw[j];
        }
        out[i] = v;
    }
}

/// Initial data of a forward solve.
#[derive(Debug, Clone, PartialEq)]
pub enum StartState {
    Point(Vec<f64>),
    PerPath(Vec<Vec<f64>>),
}

/// Simulated states, `x[(path * (n_steps + 1) + k) * d + i]`. Slices before
/// the start index hold the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub n_paths: usize,
    pub n_steps: usize,
    pub d: usize,
    pub start_step: usize,
    pub x: Vec<f64>,
    /// Control indices used on `[t_k, t_{k+1})`, `[path * n_steps + k]`.
    pub theta: Vec<usize>,
    pub gamma: Vec<usize>,
    /// Flattened noise history at each slice, `[path][slice][entry]`.
    pub hist: Vec<f64>,
    pub hist_len: usize,
}

impl StateTrajectory {
    pub fn state(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * (self.n_steps + 1) + k) * self.d;
        &self.x[base..base + self.d]
    }

    pub fn history(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * (self.n_steps + 1) + k) * self.hist_len;
        &self.hist[base..base + self.hist_len]
    }

    pub fn controls(&self, p: usize, k: usize) -> (usize, usize) {
        (self.theta[p * self.n_steps + k], self.gamma[p * self.n_steps + k])
    }
}

pub fn euler_forward(
    spec: &ProblemSpec,
    ens: &PathEnsemble,
    start_step: usize,
    start: &StartState,
    controls: &ControlProcess,
) -> Result<StateTrajectory> {
    let grid = *ens.time_grid();
    let n = grid.n_steps();
    let (d, m) = (spec.d(), spec.m());
    if start_step >= n {
        return Err(Error::invalid(format!("start step {start_step} must be < {n}")));
    }
    if ens.wiener_dim() != m {
        return Err(Error::invalid("ensemble Wiener dimension differs from the problem"));
    }
    let n_paths = ens.n_paths();
    match start {
        StartState::Point(x) if x.len() != d => {
            return Err(Error::invalid("initial state has the wrong dimension"))
        }
        StartState::PerPath(xs) if xs.len() != n_paths || xs.iter().any(|x| x.len() != d) => {
            return Err(Error::invalid("per-path initial states do not match the ensemble"))
        }
        _ => {}
    }
    if let ControlProcess::OpenLoop { theta, gamma } = controls {
        if theta.len() != n_paths * n || gamma.len() != n_paths * n {
            return Err(Error::invalid("open-loop controls do not match the ensemble shape"));
        }
    }
    let hist_len = spec.history_len();
    let dt = grid.dt();
    let stride = (n + 1) * d;

    let mut x = vec![0.0; n_paths * stride];
    let mut theta = vec![0usize; n_paths * n];
    let mut gamma = vec![0usize; n_paths * n];
    let hist_stride = ((n + 1) * hist_len).max(1);
    let mut hist = vec![0.0; n_paths * hist_stride];

    x.par_chunks_mut(stride)
        .zip(theta.par_chunks_mut(n))
        .zip(gamma.par_chunks_mut(n))
        .zip(hist.par_chunks_mut(hist_stride))
        .enumerate()
        .try_for_each(|(p, (((xp, thp), gap), hp))| -> Result<()> {
            let x0: &[f64] = match start {
                StartState::Point(x0) => x0,
                StartState::PerPath(xs) => &xs[p],
            };
            for k in 0..=start_step {
                xp[k * d..(k + 1) * d].copy_from_slice(x0);
            }
            let mut h = vec![0.0; hist_len];
            let mut scratch = vec![0.0; d + d * m];
            for k in 0..=n {
                spec.update_history(grid.time(k), ens.w(p, k), &mut h);
                if hist_len > 0 {
                    hp[k * hist_len..(k + 1) * hist_len].copy_from_slice(&h);
                }
                if k < start_step || k == n {
                    continue;
                }
                let (cur, next) = xp.split_at_mut((k + 1) * d);
                let xk = &cur[k * d..];
                let pair = controls.at(p, n, k, xk, &h);
                check_indices(spec, pair)?;
                thp[k] = pair.0;
                gap[k] = pair.1;
                euler_step(
                    spec,
                    grid.time(k),
                    dt,
                    xk,
                    spec.theta_grid().point(pair.0),
                    spec.gamma_grid().point(pair.1),
                    &h,
                    ens.dw(p, k),
                    &mut scratch,
                    &mut next[..d],
                );
                if next[..d].iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "state update",
                        location: format!("path {p}, step {k}"),
                    });
                }
            }
            Ok(())
        })?;

    if hist_len == 0 {
        hist.clear();
    }
    Ok(StateTrajectory { n_paths, n_steps: n, d, start_step, x, theta, gamma, hist, hist_len })
}

/// Default cap on the number of nodes in a non-recombining tree.
pub const TREE_NODE_BUDGET: u64 = 2_000_000;

/// Initial data of a tree solve: state, Wiener value and noise history at
/// the start slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStart {
    pub step: usize,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub hist: Vec<f64>,
}

impl TreeStart {
    /// Start at `step` with `W = 0` and an all-zero history.
    pub fn at(spec: &ProblemSpec, step: usize, x: Vec<f64>) -> Self {
        TreeStart { step, x, w: vec![0.0; spec.m()], hist: vec![0.0; spec.history_len()] }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeSlice {
    pub states: Vec<f64>,
    pub w: Vec<f64>,
    pub hist: Vec<f64>,
    /// Unconditional probability of each node.
    pub weights: Vec<f64>,
    /// Control pair applied on the step leaving each node (empty on the last slice).
    pub controls: Vec<(usize, usize)>,
}

/// Full non-recombining tree of Euler states. Children of node `i` at a slice
/// are nodes `i * B .. (i + 1) * B` of the next slice, `B` the outcome count.
#[derive(Debug, Clone)]
pub struct StateTree {
    time_grid: TimeGrid,
    start_step: usize,
    d: usize,
    m: usize,
    hist_len: usize,
    outcomes: Vec<Outcome>,
    slices: Vec<TreeSlice>,
}

impl StateTree {
    pub fn start_step(&self) -> usize {
        self.start_step
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Slice at absolute grid index `k`.
    pub fn slice(&self, k: usize) -> &TreeSlice {
        &self.slices[k - self.start_step]
    }

    pub fn state(&self, k: usize, i: usize) -> &[f64] {
        &self.slice(k).states[i * self.d..(i + 1) * self.d]
    }

    pub fn w(&self, k: usize, i: usize) -> &[f64] {
        &self.slice(k).w[i * self.m..(i + 1) * self.m]
    }

    pub fn history(&self, k: usize, i: usize) -> &[f64] {
        &self.slice(k).hist[i * self.hist_len..(i + 1) * self.hist_len]
    }

    pub fn control(&self, k: usize, i: usize) -> (usize, usize) {
        self.slice(k).controls[i]
    }

    pub fn parent(&self, k: usize, i: usize) -> Option<usize> {
        (k > self.start_step).then(|| i / self.outcomes.len())
    }

    pub fn leaf_count(&self) -> usize {
        self.slices.last().map_or(0, |s| s.weights.len())
    }

    /// Terminal payoff `Phi(X_T, history)` at every leaf.
    pub fn terminal_values(&self, spec: &ProblemSpec) -> Vec<f64> {
        let n = self.time_grid.n_steps();
        (0..self.leaf_count()).map(|i| spec.terminal(self.state(n, i), self.history(n, i))).collect()
    }
}

impl Filtration for StateTree {
    fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }
    fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }
    fn first_slice(&self) -> usize {
        self.start_step
    }
    fn slice_len(&self, k: usize) -> usize {
        self.slice(k).weights.len()
    }
    fn child_of(&self, _k: usize, node: usize, outcome: usize) -> usize {
        node * self.outcomes.len() + outcome
    }
}

/// Total node count of a full tree with `branches` children per node.
pub fn tree_size(branches: usize, steps: usize) -> u64 {
    let b = branches as u64;
    let mut total: u64 = 0;
    let mut level: u64 = 1;
    for _ in 0..=steps {
        total = total.saturating_add(level);
        level = level.saturating_mul(b);
    }
    total
}

pub fn lattice_forward(
    spec: &ProblemSpec,
    lat: &NoiseLattice,
    start: &TreeStart,
    controls: &ControlProcess,
) -> Result<StateTree> {
    lattice_forward_with_budget(spec, lat, start, controls, TREE_NODE_BUDGET)
}

pub fn lattice_forward_with_budget(
    spec: &ProblemSpec,
    lat: &NoiseLattice,
    start: &TreeStart,
    controls: &ControlProcess,
    budget: u64,
) -> Result<StateTree> {
    let grid = *lat.time_grid();
    let n = grid.n_steps();
    let (d, m) = (spec.d(), spec.m());
    if lat.wiener_dim() != m {
        return Err(Error::invalid("lattice Wiener dimension differs from the problem"));
    }
    if start.step > n {
        return Err(Error::invalid(format!("start step {} beyond the grid", start.step)));
    }
    if start.x.len() != d || start.w.len() != m || start.hist.len() != spec.history_len() {
        return Err(Error::invalid("tree start has the wrong shape"));
    }
    if let ControlProcess::OpenLoop { .. } = controls {
        return Err(Error::invalid("trees need constant or feedback controls"));
    }
    let outcomes = lat.increments().to_vec();
    let b = outcomes.len();
    let required = tree_size(b, n - start.step);
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    let hist_len = spec.history_len();
    let dt = grid.dt();

    let mut root_hist = start.hist.clone();
    spec.update_history(grid.time(start.step), &start.w, &mut root_hist);
    let mut slices = vec![TreeSlice {
        states: start.x.clone(),
        w: start.w.clone(),
        hist: root_hist,
        weights: vec![1.0],
        controls: Vec::new(),
    }];
    let mut scratch = vec![0.0; d + d * m];
    let mut next_x = vec![0.0; d];
    for k in start.step..n {
        let cur = slices.last_mut().expect("slice");
        let count = cur.weights.len();
        let mut nxt = TreeSlice {
            states: Vec::with_capacity(count * b * d),
            w: Vec::with_capacity(count * b * m),
            hist: Vec::with_capacity(count * b * hist_len),
            weights: Vec::with_capacity(count * b),
            controls: Vec::new(),
        };
        let t = grid.time(k);
        let t_next = grid.time(k + 1);
        cur.controls = Vec::with_capacity(count);
        for i in 0..count {
            let x = &cur.states[i * d..(i + 1) * d];
            let h = &cur.hist[i * hist_len..(i + 1) * hist_len];
            let pair = controls.at(0, n, k, x, h);
            check_indices(spec, pair)?;
            cur.controls.push(pair);
            let (th, ga) = (spec.theta_grid().point(pair.0), spec.gamma_grid().point(pair.1));
            for o in &outcomes {
                euler_step(spec, t, dt, x, th, ga, h, &o.dw, &mut scratch, &mut next_x);
                if next_x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "state update",
                        location: format!("slice {k}, node {i}"),
                    });
                }
                nxt.states.extend_from_slice(&next_x);
                let w0 = nxt.w.len();
                for j in 0..m {
                    nxt.w.push(cur.w[i * m + j] + o.dw[j]);
                }
                let h0 = nxt.hist.len();
                nxt.hist.extend_from_slice(h);
                let (wn, hn) = (nxt.w[w0..].to_vec(), &mut nxt.hist[h0..]);
                spec.update_history(t_next, &wn, hn);
                nxt.weights.push(cur.weights[i] * o.prob);
            }
        }
        slices.push(nxt);
    }
    Ok(StateTree { time_grid: grid, start_step: start.step, d, m, hist_len, outcomes, slices })
}

/// Max over leaves of `|X^{r,x}_T - X^{t, X^{r,x}_t}_T|`, restarting a subtree
/// at slice `t` from every node of the full tree.
pub fn check_flow_property(
    spec: &ProblemSpec,
    lat: &NoiseLattice,
    r: usize,
    t: usize,
    x: &[f64],
    controls: &ControlProcess,
) -> Result<f64> {
    let n = lat.time_grid().n_steps();
    if !(r < t && t <= n) {
        return Err(Error::invalid(format!("flow check needs r < t <= {n}, got r={r}, t={t}")));
    }
    let full = lattice_forward(spec, lat, &TreeStart::at(spec, r, x.to_vec()), controls)?;
    let b = lat.increments().len();
    let per_node = b.pow((n - t) as u32);
    let d = spec.d();
    let mut worst: f64 = 0.0;
    for i in 0..full.slice_len(t) {
        let start = TreeStart {
            step: t,
            x: full.state(t, i).to_vec(),
            w: full.w(t, i).to_vec(),
            hist: full.history(t, i).to_vec(),
        };
        let sub = lattice_forward(spec, lat, &start, controls)?;
        for leaf in 0..per_node {
            let a = full.state(n, i * per_node + leaf);
            let c = sub.state(n, leaf);
            for j in 0..d {
                worst = worst.max((a[j] - c[j]).abs());
            }
        }
    }
    Ok(worst)
}

/// Monte Carlo left-hand sides of the standard SDE moment estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimates {
    /// `E[max_l |X_l|^p]` over slices from the start.
    pub sup_moment: f64,
    /// `E[|X_s - X_t|^p]`.
    pub increment_moment: f64,
    /// `E[max_l |X^xi_l - X^xi_hat_l|^p]`.
    pub sensitivity: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn moment_estimates(
    spec: &ProblemSpec,
    ens: &PathEnsemble,
    r: usize,
    xi: &[f64],
    xi_hat: &[f64],
    controls: &ControlProcess,
    p: u32,
    (t, s): (usize, usize),
) -> Result<MomentEstimates> {
    if p != 2 && p != 4 {
        return Err(Error::invalid("moment order must be 2 or 4"));
    }
    let n = ens.time_grid().n_steps();
    if !(r <= t && t <= s && s <= n) {
        return Err(Error::invalid("moment slices need r <= t <= s <= n_steps"));
    }
    let a = euler_forward(spec, ens, r, &StartState::Point(xi.to_vec()), controls)?;
    let b = euler_forward(spec, ens, r, &StartState::Point(xi_hat.to_vec()), controls)?;
    let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let diff = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let np = ens.n_paths();
    let (mut sup_m, mut inc_m, mut sens) = (0.0, 0.0, 0.0);
    for path in 0..np {
        let mut mx: f64 = 0.0;
        let mut md: f64 = 0.0;
        for k in r..=n {
            mx = mx.max(norm(a.state(path, k)));
            md = md.max(diff(a.state(path, k), b.state(path, k)));
        }
        sup_m += mx.powi(p as i32);
        sens += md.powi(p as i32);
        inc_m += diff(a.state(path, s), a.state(path, t)).powi(p as i32);
    }
    let npf = np as f64;
    Ok(MomentEstimates { sup_moment: sup_m / npf, increment_moment: inc_m / npf, sensitivity: sens / npf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_lattice, sample_paths};
    use crate::problem::{ControlGrid, ControlLabel};

    fn spec_1d(b: f64, s: f64) -> ProblemSpec {
        let th = ControlGrid::scalar(&[0.0], ControlLabel::Theta).unwrap();
        let ga = ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap();
        ProblemSpec::new("t", 1, 1, 1.0, 1.0, th, ga)
            .unwrap()
            .with_drift(move |_, o| o[0] = b)
            .with_diffusion(move |_, o| o[0] = s)
    }

    #[test]
    fn frozen_and_constant_drift() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let ens = sample_paths(g, 1, 50, 1).unwrap();
        let frozen = euler_forward(&spec_1d(0.0, 0.0), &ens, 0, &StartState::Point(vec![0.7]), &ControlProcess::constant(0, 0)).unwrap();
        assert!(frozen.x.iter().all(|&v| v == 0.7));
        let drift = euler_forward(&spec_1d(0.5, 0.0), &ens, 2, &StartState::Point(vec![1.0]), &ControlProcess::constant(0, 0)).unwrap();
        for p in 0..50 {
            assert!((drift.state(p, 8)[0] - (1.0 + 0.5 * 0.75)).abs() < 1e-14);
            assert_eq!(drift.state(p, 0)[0], 1.0);
        }
    }

    #[test]
    fn brownian_moments() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let n = 100_000;
        let ens = sample_paths(g, 2, n, 11).unwrap();
        let th = ControlGrid::scalar(&[0.0], ControlLabel::Theta).unwrap();
        let ga = ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap();
        let spec = ProblemSpec::new("bm", 2, 2, 1.0, 2.0, th, ga)
            .unwrap()
            .with_diffusion(|_, o| {
                o.fill(0.0);
                o[0] = 1.0;
                o[3] = 1.0;
            });
        let tr = euler_forward(&spec, &ens, 3, &StartState::Point(vec![0.2, -0.1]), &ControlProcess::constant(0, 0)).unwrap();
        let span = 0.7;
        let mut mean = [0.0; 2];
        for p in 0..n {
            for i in 0..2 {
                mean[i] += tr.state(p, 10)[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        assert!((mean[0] - 0.2).abs() < 4.0 * (span / n as f64).sqrt());
        assert!((mean[1] + 0.1).abs() < 4.0 * (span / n as f64).sqrt());
        let mut cov = [[0.0; 2]; 2];
        for p in 0..n {
            let x = tr.state(p, 10);
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        assert!((cov[0][0] / span - 1.0).abs() < 0.05);
        assert!((cov[1][1] / span - 1.0).abs() < 0.05);
        assert!(cov[0][1].abs() < 0.05 * span);
    }

    #[test]
    fn pathwise_growth_bound() {
        // |b|, |sigma| <= L  =>  |X_k - x| <= L (t_k - t_r) + L |W_k - W_r| pathwise.
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let ens = sample_paths(g, 1, 500, 3).unwrap();
        let th = ControlGrid::scalar(&[-1.0, 1.0], ControlLabel::Theta).unwrap();
        let ga = ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap();
        let spec = ProblemSpec::new("g", 1, 1, 1.0, 1.0, th, ga)
            .unwrap()
            .with_drift(|i, o| o[0] = i.x[0].sin() * i.theta[0])
            .with_diffusion(|_, o| o[0] = 1.0);
        let ctl = ControlProcess::feedback(|k, _, _| (k % 2, 0));
        let tr = euler_forward(&spec, &ens, 0, &StartState::Point(vec![0.0]), &ctl).unwrap();
        for p in 0..500 {
            for k in 0..=20 {
                let bound = g.time(k) + ens.w(p, k)[0].abs();
                assert!(tr.state(p, k)[0].abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn tree_leaves_and_weights() {
        let g = TimeGrid::new(0.0, 3.0, 3).unwrap();
        let lat = build_lattice(g, 1, 2).unwrap();
        let spec = spec_1d(0.0, 1.0);
        let tree = lattice_forward(&spec, &lat, &TreeStart::at(&spec, 0, vec![0.0]), &ControlProcess::constant(0, 0)).unwrap();
        assert_eq!(tree.leaf_count(), 8);
        assert!(tree.slice(3).weights.iter().all(|&w| w == 0.125));

        let g2 = TimeGrid::new(0.0, 2.0, 2).unwrap();
        let lat2 = build_lattice(g2, 1, 2).unwrap();
        let tree2 = lattice_forward(&spec, &lat2, &TreeStart::at(&spec, 0, vec![0.0]), &ControlProcess::constant(0, 0)).unwrap();
        assert_eq!(tree2.slice(2).states, vec![2.0, 0.0, 0.0, -2.0]);
        assert_eq!(tree2.parent(2, 3), Some(1));
    }

    #[test]
    fn tree_budget_is_enforced() {
        let g = TimeGrid::new(0.0, 1.0, 12).unwrap();
        let lat = build_lattice(g, 1, 2).unwrap();
        let spec = spec_1d(0.0, 1.0);
        let err = lattice_forward_with_budget(&spec, &lat, &TreeStart::at(&spec, 0, vec![0.0]), &ControlProcess::constant(0, 0), 1000).unwrap_err();
        assert!(matches!(err, Error::Budget { required: 8191, budget: 1000 }));
    }

    #[test]
    fn flow_property_frozen() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let lat = build_lattice(g, 1, 2).unwrap();
        let spec = spec_1d(0.0, 0.0);
        let disc = check_flow_property(&spec, &lat, 0, 2, &[0.3], &ControlProcess::constant(0, 0)).unwrap();
        assert_eq!(disc, 0.0);
    }

    #[test]
    fn degenerate_moments() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let ens = sample_paths(g, 1, 10, 1).unwrap();
        let est = moment_estimates(&spec_1d(0.0, 0.0), &ens, 0, &[2.0], &[1.5], &ControlProcess::constant(0, 0), 2, (1, 3)).unwrap();
        assert_eq!(est.sup_moment, 4.0);
        assert_eq!(est.increment_moment, 0.0);
        assert_eq!(est.sensitivity, 0.25);
    }
}
