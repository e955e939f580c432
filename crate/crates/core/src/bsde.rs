//! Backward solvers for the payoff BSDE: exact conditional expectations on
//! trees and lattices, least-squares regression on path ensembles.
//!
//! One step reads `Z_k = E_k[Y_{k+1} dW_k] / dt` and
//! `Y_k = E_k[Y_{k+1}] + f(t_k, X_k, Y_k, Z_k) dt`, implicit in `Y`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{block_seed, build_lattice, Filtration, NoiseLattice, PathEnsemble, TimeGrid};
use crate::hamiltonian::{f_driver, TestField};
use crate::problem::{DriverFn, DriverInput, ProblemSpec};
use crate::sde::{lattice_forward, ControlProcess, StateTrajectory, StateTree, TreeStart};

pub const FIXED_POINT_MAX_ITER: usize = 50;
pub const FIXED_POINT_TOL: f64 = 1e-13;

/// Solves `y = e + dt g(y)`. Returns `(y, residual)`.
///
/// Picard iteration first; if it has not met the tolerance after
/// [`FIXED_POINT_MAX_ITER`] rounds, bisection on `y - e - dt g(y)`, which is
/// increasing whenever `dt L < 1`.
pub fn implicit_step(e: f64, dt: f64, g: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let h = |y: f64| y - e - dt * g(y);
    let tol = FIXED_POINT_TOL * e.abs().max(1.0);
    let mut y = e;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = e + dt * g(y);
        if !next.is_finite() {
            return Err(Error::NonFinite { what: "driver", location: format!("y = {y}") });
        }
        let moved = (next - y).abs();
        y = next;
        if moved <= tol * 0.1 {
            break;
        }
    }
    let r = h(y).abs();
    if r <= tol {
        return Ok((y, r));
    }
    let mut width = r.max(1e-12);
    let (mut lo, mut hi) = (y - width, y + width);
    for _ in 0..200 {
        if h(lo) <= 0.0 && h(hi) >= 0.0 {
            break;
        }
        width *= 2.0;
        lo = y - width;
        hi = y + width;
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
    let y = if h(lo).abs() <= h(hi).abs() { lo } else { hi };
    Ok((y, h(y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LatticeExact,
    Lsmc,
}

/// `(Y, Z)` on slices `start..=end` of a filtration. `y[k - start][node]`;
/// `z[k - start][node * m + j]`, empty at the end slice.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    pub scheme: Scheme,
    pub start: usize,
    pub end: usize,
    pub m: usize,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub max_residual: f64,
    /// `(||Phi|| + ||f(., 0, 0)|| T) e^{2LT}` when computed by [`solve_lattice`].
    pub apriori_bound: Option<f64>,
}

impl BsdeSolution {
    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y[k - self.start]
    }

    pub fn z_at(&self, k: usize, node: usize) -> &[f64] {
        &self.z[k - self.start][node * self.m..(node + 1) * self.m]
    }

    /// `Y` at node 0 of the start slice.
    pub fn root(&self) -> f64 {
        self.y[0][0]
    }

    pub fn max_abs_y(&self) -> f64 {
        self.y.iter().flatten().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

/// Driver seen by the backward recursion: `(slice, node, y, z) -> f`.
pub type NodeDriver<'a> = dyn Fn(usize, usize, f64, &[f64]) -> f64 + Sync + 'a;

/// Backward recursion from `eta` at slice `end` down to slice `start`.
pub fn solve_backward<F: Filtration + Sync>(
    filt: &F,
    start: usize,
    end: usize,
    eta: &[f64],
    driver: &NodeDriver,
) -> Result<BsdeSolution> {
    if start < filt.first_slice() || start > end || end > filt.time_grid().n_steps() {
        return Err(Error::invalid(format!("bad slice range {start}..={end}")));
    }
    if eta.len() != filt.slice_len(end) {
        return Err(Error::invalid(format!(
            "terminal values: {} entries for {} nodes",
            eta.len(),
            filt.slice_len(end)
        )));
    }
    let m = filt.outcomes().first().map_or(0, |o| o.dw.len());
    let dt = filt.time_grid().dt();
    let outcomes = filt.outcomes();
    let span = end - start;
    let mut y = vec![Vec::new(); span + 1];
    let mut z = vec![Vec::new(); span + 1];
    y[span] = eta.to_vec();
    let mut max_residual: f64 = 0.0;
    for k in (start..end).rev() {
        let next = &y[k + 1 - start];
        let solved: Vec<(f64, Vec<f64>, f64)> = (0..filt.slice_len(k))
            .into_par_iter()
            .map(|i| {
                let mut e = 0.0;
                let mut zi = vec![0.0; m];
                for (o, out) in outcomes.iter().enumerate() {
                    let v = next[filt.child_of(k, i, o)];
                    e += out.prob * v;
                    for j in 0..m {
                        zi[j] += out.prob * v * out.dw[j];
                    }
                }
                zi.iter_mut().for_each(|c| *c /= dt);
                let (yi, r) = implicit_step(e, dt, |yy| driver(k, i, yy, &zi)).map_err(|err| match err {
                    Error::NonFinite { what, .. } => {
                        Error::NonFinite { what, location: format!("slice {k}, node {i}") }
                    }
                    other => other,
                })?;
                Ok((yi, zi, r))
            })
            .collect::<Result<_>>()?;
        let mut yk = Vec::with_capacity(solved.len());
        let mut zk = Vec::with_capacity(solved.len() * m);
        for (yi, zi, r) in solved {
            yk.push(yi);
            zk.extend_from_slice(&zi);
            max_residual = max_residual.max(r);
        }
        y[k - start] = yk;
        z[k - start] = zk;
    }
    Ok(BsdeSolution { scheme: Scheme::LatticeExact, start, end, m, y, z, max_residual, apriori_bound: None })
}

fn tree_driver<'a>(spec: &'a ProblemSpec, tree: &'a StateTree, f: &'a DriverFn) -> impl Fn(usize, usize, f64, &[f64]) -> f64 + Sync + 'a {
    let grid = *tree.time_grid();
    move |k, i, y, z| {
        let (th, ga) = tree.control(k, i);
        f(&DriverInput {
            t: grid.time(k),
            x: tree.state(k, i),
            y,
            z,
            theta: spec.theta_grid().point(th),
            gamma: spec.gamma_grid().point(ga),
            hist: tree.history(k, i),
        })
    }
}

/// Solves on a state tree from its start slice to the terminal slice, with the
/// problem's driver or `driver_override`.
pub fn solve_lattice(spec: &ProblemSpec, tree: &StateTree, terminal: &[f64], driver_override: Option<&DriverFn>) -> Result<BsdeSolution> {
    let grid = *tree.time_grid();
    spec.check_step(&grid)?;
    let f: &DriverFn = match driver_override {
        Some(f) => f,
        None => &*spec.driver_fn(),
    };
    let drv = tree_driver(spec, tree, f);
    let mut sol = solve_backward(tree, tree.start_step(), grid.n_steps(), terminal, &drv)?;
    let zero = vec![0.0; spec.m()];
    let mut f0: f64 = 0.0;
    for k in tree.start_step()..grid.n_steps() {
        for i in 0..tree.slice_len(k) {
            f0 = f0.max(drv(k, i, 0.0, &zero).abs());
        }
    }
    let phi = terminal.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    let span = grid.horizon() - grid.time(tree.start_step());
    sol.apriori_bound = Some((phi + f0 * span) * (2.0 * spec.lipschitz() * span).exp());
    Ok(sol)
}

/// Polynomial regression basis for the Monte Carlo solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcConfig {
    /// Total degree of the state monomials.
    pub degree: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        LsmcConfig { degree: 2, bootstrap: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsmcSolution {
    pub start: usize,
    pub end: usize,
    /// `y[k - start][path]`.
    pub y: Vec<Vec<f64>>,
    /// Mean of `Y` over paths at the start slice.
    pub y0: f64,
    /// Bootstrap standard error of `y0`; zero when no resamples were drawn.
    pub se: f64,
    /// Root-mean-square regression residual of `Y_{k+1}` on slice `k`.
    pub residuals: Vec<f64>,
    /// Set when a normal matrix was rank deficient and ridge was added.
    pub ridge_fallback: bool,
}

fn monomials(nv: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for mono in &frontier {
            let lo = mono.last().copied().unwrap_or(0);
            for v in lo..nv {
                let mut m2 = mono.clone();
                m2.push(v);
                next.push(m2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

struct Basis {
    state_vars: Vec<(usize, f64, f64)>,
    hist_vars: Vec<(usize, f64, f64)>,
    monos: Vec<Vec<usize>>,
}

impl Basis {
    fn size(&self) -> usize {
        self.monos.len() + self.hist_vars.len()
    }

    fn row(&self, x: &[f64], hist: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let u: Vec<f64> = self.state_vars.iter().map(|&(i, mu, sd)| (x[i] - mu) / sd).collect();
        for mono in &self.monos {
            out.push(mono.iter().map(|&v| u[v]).product());
        }
        for &(i, mu, sd) in &self.hist_vars {
            out.push((hist[i] - mu) / sd);
        }
    }
}

fn standardized(values: impl Iterator<Item = f64>, n: usize) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    (sd > 1e-12 * (1.0 + mean.abs())).then_some((mean, sd))
}

fn basis_for(traj: &StateTrajectory, rows: &[usize], k: usize, degree: usize) -> Basis {
    let n = rows.len();
    let state_vars: Vec<(usize, f64, f64)> = (0..traj.d)
        .filter_map(|i| standardized(rows.iter().map(|&p| traj.state(p, k)[i]), n).map(|(mu, sd)| (i, mu, sd)))
        .collect();
    let hist_vars = (0..traj.hist_len)
        .filter_map(|i| standardized(rows.iter().map(|&p| traj.history(p, k)[i]), n).map(|(mu, sd)| (i, mu, sd)))
        .collect();
    let monos = monomials(state_vars.len(), degree);
    Basis { state_vars, hist_vars, monos }
}

/// Least squares of `targets` (`n x r`, row-major) on the basis rows.
/// Returns coefficients `p x r`, the ridge flag and the rms residual of column 0.
fn regress(design: &[f64], p: usize, targets: &[f64], r: usize) -> (DMatrix<f64>, bool, f64) {
    let n = design.len() / p;
    const CHUNK: usize = 4096;
    let partial: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DMatrix::<f64>::zeros(p, r);
            for row in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let xr = &design[row * p..(row + 1) * p];
                let tr = &targets[row * r..(row + 1) * r];
                for a in 0..p {
                    for b in 0..p {
                        xtx[(a, b)] += xr[a] * xr[b];
                    }
                    for j in 0..r {
                        xty[(a, j)] += xr[a] * tr[j];
                    }
                }
            }
            (xtx, xty)
        })
        .collect();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DMatrix::<f64>::zeros(p, r);
    for (a, b) in partial {
        xtx += a;
        xty += b;
    }
    let eig = xtx.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut ridge = false;
    if !(min_ev > 1e-12 * max_ev) {
        let lambda = 1e-8 * xtx.trace();
        for a in 0..p {
            xtx[(a, a)] += lambda;
        }
        ridge = true;
    }
    let beta = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => {
            ridge = true;
            xtx.pseudo_inverse(1e-14).map(|inv| inv * &xty).unwrap_or_else(|_| DMatrix::zeros(p, r))
        }
    };
    let mut ss = 0.0;
    for row in 0..n {
        let xr = DVector::from_column_slice(&design[row * p..(row + 1) * p]);
        let fit = (xr.transpose() * beta.column(0))[(0, 0)];
        ss += (targets[row * r] - fit).powi(2);
    }
    (beta, ridge, (ss / n.max(1) as f64).sqrt())
}

struct LsmcPass {
    y: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    ridge: bool,
}

#[allow(clippy::too_many_arguments)]
fn lsmc_pass(
    spec: &ProblemSpec,
    traj: &StateTrajectory,
    ens: &PathEnsemble,
    rows: &[usize],
    start: usize,
    end: usize,
    eta: &[f64],
    degree: usize,
    f: &DriverFn,
) -> Result<LsmcPass> {
    let grid = *ens.time_grid();
    let dt = grid.dt();
    let m = spec.m();
    let span = end - start;
    let mut y = vec![Vec::new(); span + 1];
    y[span] = rows.iter().map(|&p| eta[p]).collect();
    let mut residuals = vec![0.0; span];
    let mut ridge = false;
    for k in (start..end).rev() {
        let basis = basis_for(traj, rows, k, degree);
        let p = basis.size();
        if rows.len() < 10 * p {
            return Err(Error::invalid(format!("{} paths for a basis of size {p}; need >= 10x", rows.len())));
        }
        let next = &y[k + 1 - start];
        let mut design = vec![0.0; rows.len() * p];
        design.par_chunks_mut(p).zip(rows.par_iter()).for_each(|(out, &path)| {
            let mut buf = Vec::with_capacity(p);
            basis.row(traj.state(path, k), traj.history(path, k), &mut buf);
            out.copy_from_slice(&buf);
        });
        let r = 1 + m;
        let mut targets = vec![0.0; rows.len() * r];
        for (idx, &path) in rows.iter().enumerate() {
            let v = next[idx];
            targets[idx * r] = v;
            let dw = ens.dw(path, k);
            for j in 0..m {
                targets[idx * r + 1 + j] = v * dw[j] / dt;
            }
        }
        let (beta, rg, res) = regress(&design, p, &targets, r);
        ridge |= rg;
        residuals[k - start] = res;
        let t = grid.time(k);
        let yk: Vec<f64> = rows
            .par_iter()
            .enumerate()
            .map(|(idx, &path)| {
                let xr = &design[idx * p..(idx + 1) * p];
                let fit = |col: usize| (0..p).map(|a| xr[a] * beta[(a, col)]).sum::<f64>();
                let e = fit(0);
                let z: Vec<f64> = (1..r).map(fit).collect();
                let (th, ga) = traj.controls(path, k);
                let x = traj.state(path, k);
                let hist = traj.history(path, k);
                implicit_step(e, dt, |yy| {
                    f(&DriverInput {
                        t,
                        x,
                        y: yy,
                        z: &z,
                        theta: spec.theta_grid().point(th),
                        gamma: spec.gamma_grid().point(ga),
                        hist,
                    })
                })
                .map(|(v, _)| v)
                .map_err(|_| Error::NonFinite { what: "driver", location: format!("path {path}, step {k}") })
            })
            .collect::<Result<_>>()?;
        y[k - start] = yk;
    }
    Ok(LsmcPass { y, residuals, ridge })
}

/// Regression solve along simulated trajectories from slice `start` to `end`,
/// with `eta[path]` at `end`.
#[allow(clippy::too_many_arguments)]
pub fn solve_lsmc(
    spec: &ProblemSpec,
    traj: &StateTrajectory,
    ens: &PathEnsemble,
    start: usize,
    end: usize,
    eta: &[f64],
    driver_override: Option<&DriverFn>,
    config: LsmcConfig,
) -> Result<LsmcSolution> {
    let n = ens.time_grid().n_steps();
    if start > end || end > n || start < traj.start_step {
        return Err(Error::invalid(format!("bad slice range {start}..={end}")));
    }
    if eta.len() != ens.n_paths() || traj.n_paths != ens.n_paths() {
        return Err(Error::invalid("terminal values do not match the ensemble"));
    }
    spec.check_step(ens.time_grid())?;
    let f: &DriverFn = match driver_override {
        Some(f) => f,
        None => &*spec.driver_fn(),
    };
    let rows: Vec<usize> = (0..ens.n_paths()).collect();
    let main = lsmc_pass(spec, traj, ens, &rows, start, end, eta, config.degree, f)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let y0 = mean(&main.y[0]);
    let mut ridge = main.ridge;
    let se = if config.bootstrap >= 2 {
        let reps: Vec<(f64, bool)> = (0..config.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(block_seed(config.seed, b as u64));
                let sample: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect();
                let pass = lsmc_pass(spec, traj, ens, &sample, start, end, eta, config.degree, f)?;
                Ok((mean(&pass.y[0]), pass.ridge))
            })
            .collect::<Result<_>>()?;
        ridge |= reps.iter().any(|r| r.1);
        let mu = reps.iter().map(|r| r.0).sum::<f64>() / reps.len() as f64;
        (reps.iter().map(|r| (r.0 - mu).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(LsmcSolution { start, end, y: main.y, y0, se, residuals: main.residuals, ridge_fallback: ridge })
}

/// Backward semigroup query: `eta` given at slice `end`, answer at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupQuery {
    pub start: usize,
    pub end: usize,
    pub eta: Vec<f64>,
}

pub enum Backend<'a> {
    Lattice(&'a StateTree),
    Lsmc { traj: &'a StateTrajectory, ens: &'a PathEnsemble, config: LsmcConfig },
}

/// `G_{start, end}[eta]` per node (lattice) or per path (regression).
pub fn semigroup_apply(spec: &ProblemSpec, backend: &Backend, query: &SemigroupQuery) -> Result<Vec<f64>> {
    if query.end < query.start {
        return Err(Error::invalid("semigroup end slice precedes start slice"));
    }
    match backend {
        Backend::Lattice(tree) => {
            spec.check_step(tree.time_grid())?;
            let f = spec.driver_fn();
            let drv = tree_driver(spec, tree, &*f);
            let sol = solve_backward(*tree, query.start, query.end, &query.eta, &drv)?;
            Ok(sol.y_at(query.start).to_vec())
        }
        Backend::Lsmc { traj, ens, config } => {
            let cfg = LsmcConfig { bootstrap: 0, ..*config };
            let sol = solve_lsmc(spec, traj, ens, query.start, query.end, &query.eta, None, cfg)?;
            Ok(sol.y[0].clone())
        }
    }
}

/// Payoff `J(t_k, x; theta, gamma)` on a lattice, with the a-priori flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub value: f64,
    /// `L (T + 1)`.
    pub bound: f64,
    pub within_bound: bool,
}

pub fn payoff_j(spec: &ProblemSpec, lat: &NoiseLattice, k: usize, x: &[f64], controls: &ControlProcess) -> Result<Payoff> {
    let tree = lattice_forward(spec, lat, &TreeStart::at(spec, k, x.to_vec()), controls)?;
    let sol = solve_lattice(spec, &tree, &tree.terminal_values(spec), None)?;
    let bound = spec.lipschitz() * (spec.horizon() + 1.0);
    let value = sol.root();
    Ok(Payoff { value, bound, within_bound: value.abs() <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub violations: usize,
    /// `max (Y1 - Y2)` over all nodes.
    pub max_excess: f64,
}

/// Counts nodes with `Y1 > Y2 + 1e-10` for terminal values `xi1, xi2` and
/// drivers `g1, g2` on the same tree.
pub fn compare_bsde(tree: &StateTree, xi1: &[f64], xi2: &[f64], g1: &NodeDriver, g2: &NodeDriver) -> Result<ComparisonReport> {
    let n = tree.time_grid().n_steps();
    let a = solve_backward(tree, tree.start_step(), n, xi1, g1)?;
    let b = solve_backward(tree, tree.start_step(), n, xi2, g2)?;
    let mut rep = ComparisonReport { violations: 0, max_excess: f64::NEG_INFINITY };
    for (ya, yb) in a.y.iter().zip(&b.y) {
        for (u, v) in ya.iter().zip(yb) {
            rep.max_excess = rep.max_excess.max(u - v);
            if *u > v + 1e-10 {
                rep.violations += 1;
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreezingPoint {
    pub delta: f64,
    pub gap: f64,
    pub y1: f64,
    pub y2: f64,
}

/// For each `delta`, solves on `[tau, tau + delta]` with zero terminal value
/// the BSDE with driver `F(s, X_s, ...)` (Y1) and with `F(s, xi, ...)` (Y2),
/// using `steps` lattice steps and fixed controls, and returns `|Y1 - Y2|` at
/// `tau`.
pub fn freezing_gap(
    spec: &ProblemSpec,
    field: &TestField,
    xi: &[f64],
    tau: f64,
    deltas: &[f64],
    steps: usize,
    controls: (usize, usize),
) -> Result<Vec<FreezingPoint>> {
    let ctl = ControlProcess::constant(controls.0, controls.1);
    let (th, ga) = (spec.theta_grid().point(controls.0).to_vec(), spec.gamma_grid().point(controls.1).to_vec());
    deltas
        .iter()
        .map(|&delta| {
            if tau + delta > spec.horizon() + 1e-12 {
                return Err(Error::invalid(format!("tau + delta = {} beyond the horizon", tau + delta)));
            }
            let grid = TimeGrid::new(tau, tau + delta, steps)?;
            let lat = build_lattice(grid, spec.m(), 2)?;
            let tree = lattice_forward(spec, &lat, &TreeStart::at(spec, 0, xi.to_vec()), &ctl)?;
            spec.check_step(&grid)?;
            let zero = vec![0.0; tree.leaf_count()];
            let y1 = solve_backward(&tree, 0, steps, &zero, &|k, i, y, z| {
                f_driver(field, spec, grid.time(k), tree.state(k, i), y, z, &th, &ga, tree.history(k, i))
            })?
            .root();
            let y2 = solve_backward(&tree, 0, steps, &zero, &|k, i, y, z| {
                f_driver(field, spec, grid.time(k), xi, y, z, &th, &ga, tree.history(k, i))
            })?
            .root();
            Ok(FreezingPoint { delta, gap: (y1 - y2).abs(), y1, y2 })
        })
        .collect()
}

/// Least-squares slope of `log gap` against `log delta`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_paths;
    use crate::problem::{ControlGrid, ControlLabel};
    use crate::sde::{euler_forward, StartState};

    fn spec_bm(horizon: f64) -> ProblemSpec {
        let th = ControlGrid::scalar(&[0.0], ControlLabel::Theta).unwrap();
        let ga = ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap();
        ProblemSpec::new("bm", 1, 1, horizon, 1.0, th, ga).unwrap().with_diffusion(|_, o| o[0] = 1.0)
    }

    fn tree(spec: &ProblemSpec, n: usize) -> StateTree {
        let lat = build_lattice(TimeGrid::new(0.0, spec.horizon(), n).unwrap(), spec.m(), 2).unwrap();
        lattice_forward(spec, &lat, &TreeStart::at(spec, 0, vec![0.2]), &ControlProcess::constant(0, 0)).unwrap()
    }

    #[test]
    fn implicit_step_linear_driver() {
        // y = 1 + 0.1 * 3 y  =>  y = 1 / 0.7
        let (y, r) = implicit_step(1.0, 0.1, |y| 3.0 * y).unwrap();
        assert!((y - 1.0 / 0.7).abs() < 1e-13);
        assert!(r <= 1e-13);
    }

    #[test]
    fn implicit_step_bisection_fallback() {
        // dt L = 0.99: Picard converges too slowly for 50 rounds.
        let (y, r) = implicit_step(1.0, 0.99, |y| -y).unwrap();
        assert!((y - 1.0 / 1.99).abs() < 1e-13, "{y}");
        assert!(r <= 1e-13);
    }

    #[test]
    fn zero_driver_is_expectation() {
        let spec = spec_bm(1.0).with_terminal(|x, _| x[0] * x[0]);
        let t = tree(&spec, 8);
        let sol = solve_lattice(&spec, &t, &t.terminal_values(&spec), None).unwrap();
        // E[(0.2 + W_1)^2] = 0.04 + 1 on the binomial walk too.
        assert!((sol.root() - 1.04).abs() < 1e-12);
        assert_eq!(sol.y_at(8), &t.terminal_values(&spec)[..]);
        assert!(sol.max_abs_y() <= sol.apriori_bound.unwrap());
        // Z_0 = E[Y_1 dW]/dt
        let z0 = sol.z_at(0, 0)[0];
        assert!((z0 - 2.0 * 0.2).abs() < 1e-12, "{z0}");
    }

    #[test]
    fn constant_driver_adds_drift() {
        let spec = spec_bm(1.0).with_terminal(|x, _| x[0].tanh()).with_driver(|_| 0.3);
        let t = tree(&spec, 6);
        let sol = solve_lattice(&spec, &t, &t.terminal_values(&spec), None).unwrap();
        let plain = solve_lattice(&spec, &t, &t.terminal_values(&spec), Some(&|_: &DriverInput| 0.0)).unwrap();
        assert!((sol.root() - plain.root() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_steps() {
        let spec = spec_bm(1.0).with_lipschitz(10.0);
        let t = tree(&spec, 5);
        let err = solve_lattice(&spec, &t, &t.terminal_values(&spec), None).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { min_steps: 11, .. }));
    }

    #[test]
    fn semigroup_composes() {
        let spec = spec_bm(1.0).with_terminal(|x, _| x[0].sin()).with_driver(|i| 0.5 * i.y.abs() - 0.3 * i.z[0]);
        let t = tree(&spec, 8);
        let full = solve_lattice(&spec, &t, &t.terminal_values(&spec), None).unwrap();
        let q = SemigroupQuery { start: 2, end: 5, eta: full.y_at(5).to_vec() };
        let g = semigroup_apply(&spec, &Backend::Lattice(&t), &q).unwrap();
        for (a, b) in g.iter().zip(full.y_at(2)) {
            assert!((a - b).abs() < 1e-12);
        }
        let id = SemigroupQuery { start: 3, end: 3, eta: full.y_at(3).to_vec() };
        assert_eq!(semigroup_apply(&spec, &Backend::Lattice(&t), &id).unwrap(), full.y_at(3));
    }

    #[test]
    fn lsmc_martingale_and_linear_driver() {
        let spec = spec_bm(1.0).with_terminal(|x, _| x[0]);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let ens = sample_paths(grid, 1, 20_000, 5).unwrap();
        let traj = euler_forward(&spec, &ens, 0, &StartState::Point(vec![0.7]), &ControlProcess::constant(0, 0)).unwrap();
        let eta: Vec<f64> = (0..ens.n_paths()).map(|p| traj.state(p, 10)[0]).collect();
        let cfg = LsmcConfig { bootstrap: 30, ..Default::default() };
        let sol = solve_lsmc(&spec, &traj, &ens, 0, 10, &eta, None, cfg).unwrap();
        assert!((sol.y0 - 0.7).abs() <= 3.0 * sol.se.max(1e-3), "{} +- {}", sol.y0, sol.se);

        let a = 0.4;
        let lin = spec.clone().with_driver(move |i| a * i.y);
        let sol = solve_lsmc(&lin, &traj, &ens, 0, 10, &eta, None, cfg).unwrap();
        // discrete integrating factor (1 - a dt)^{-n}
        let exact = 0.7 * (1.0 - a * 0.1f64).powi(-10);
        assert!((sol.y0 - exact).abs() <= 3.0 * sol.se.max(1e-3), "{} vs {exact} +- {}", sol.y0, sol.se);
        assert!(!sol.ridge_fallback);
    }

    #[test]
    fn comparison_identical_and_shifted() {
        let spec = spec_bm(1.0).with_terminal(|x, _| x[0].cos());
        let t = tree(&spec, 6);
        let xi = t.terminal_values(&spec);
        let g = |_: usize, _: usize, y: f64, z: &[f64]| 0.4 * y + 0.3 * z[0].abs();
        let same = compare_bsde(&t, &xi, &xi, &g, &g).unwrap();
        assert_eq!((same.violations, same.max_excess), (0, 0.0));
        let lower: Vec<f64> = xi.iter().map(|v| v - 0.5).collect();
        let rep = compare_bsde(&t, &lower, &xi, &g, &g).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_excess < 0.0);
    }

    #[test]
    fn freezing_gap_vanishes_for_x_free_data() {
        let th = ControlGrid::scalar(&[0.0], ControlLabel::Theta).unwrap();
        let ga = ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap();
        let spec = ProblemSpec::new("c", 1, 1, 1.0, 1.0, th, ga).unwrap().with_drift(|_, o| o[0] = 0.5).with_diffusion(|_, o| o[0] = 1.0);
        let pts = freezing_gap(&spec, &TestField::zero(1, 1), &[0.3], 0.0, &[0.2, 0.1], 6, (0, 0)).unwrap();
        assert!(pts.iter().all(|p| p.gap == 0.0));
    }

    #[test]
    fn slope_fit() {
        let xs = [0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!(monomials(0, 2).len(), 1);
        assert_eq!(monomials(3, 3).len(), 20);
    }
}
