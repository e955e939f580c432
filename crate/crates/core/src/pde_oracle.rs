//! Explicit monotone finite differences for the Markovian Isaacs equation
//! `u_t + H(t, x, D^2 u, Du, u) = 0`, `u(T) = Phi`, in one or two space
//! dimensions.
//!
//! The step is `u_k = u_{k+1} + dt H(t_{k+1}, ., u_{k+1})`. Second derivatives
//! are central, the drift term is upwinded per control pair and the gradient
//! fed to the driver's `z` argument is central.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{Side, ValueField, GameTree};
use crate::hamiltonian::{ell_upwind, HamiltonianPoint};
use crate::problem::{CoeffInput, DriverInput, ProblemSpec, Randomness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Boundary nodes hold the terminal payoff.
    Clamped,
    /// Boundary nodes are linearly extrapolated from the interior. This
    /// freezes the second difference next to the edge, which suits payoffs
    /// with nearly linear tails.
    OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis, boundaries included.
    pub n_x: usize,
    /// Time steps; `None` sizes them from the stability bound.
    pub n_t: Option<usize>,
    pub boundary: Boundary,
}

impl PdeGrid {
    pub fn cube(lo: f64, hi: f64, d: usize, n_x: usize, boundary: Boundary) -> Self {
        PdeGrid { lo: vec![lo; d], hi: vec![hi; d], n_x, n_t: None, boundary }
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n_x - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.n_x.pow(self.d() as u32)
    }

    /// Multi-index of a flat node index, axis 0 fastest.
    fn index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        (0..self.d())
            .map(|_| {
                let i = rest % self.n_x;
                rest /= self.n_x;
                i
            })
            .collect()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.n_x + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.index(flat).iter().enumerate().map(|(a, &i)| self.lo[a] + i as f64 * self.dx(a)).collect()
    }

    fn is_boundary(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| i == 0 || i == self.n_x - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub grid: PdeGrid,
    pub times: Vec<f64>,
    /// `u[k][node]` at `times[k]`.
    pub u: Vec<Vec<f64>>,
    pub side: Side,
    /// Largest violation of the discrete maximum principle over all steps
    /// (`<= 0` when it holds).
    pub max_principle_excess: f64,
}

impl PdeSolution {
    /// Field on the grid from precomputed values, for residual checks.
    pub fn from_values(grid: PdeGrid, times: Vec<f64>, u: Vec<Vec<f64>>, side: Side) -> Self {
        PdeSolution { grid, times, u, side, max_principle_excess: f64::NEG_INFINITY }
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Multilinear interpolation in space and linear in time.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let n_t = self.times.len() - 1;
        let s = ((t - self.times[0]) / self.dt()).clamp(0.0, n_t as f64);
        let k = (s.floor() as usize).min(n_t.saturating_sub(1));
        let wt = s - k as f64;
        let a = self.eval_slice(k, x);
        if wt == 0.0 {
            return a;
        }
        (1.0 - wt) * a + wt * self.eval_slice(k + 1, x)
    }

    pub fn eval_slice(&self, k: usize, x: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.d();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = ((x[a] - g.lo[a]) / g.dx(a)).clamp(0.0, (g.n_x - 1) as f64);
            base[a] = (s.floor() as usize).min(g.n_x - 2);
            frac[a] = s - base[a] as f64;
        }
        let mut out = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let idx: Vec<usize> = (0..d)
                .map(|a| {
                    let bit = (corner >> a) & 1;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                    base[a] + bit
                })
                .collect();
            if w != 0.0 {
                out += w * self.u[k][g.flat(&idx)];
            }
        }
        out
    }
}

struct Stencil {
    a: Vec<f64>,
    p: Vec<f64>,
    p_fwd: Vec<f64>,
    p_bwd: Vec<f64>,
}

fn stencil(grid: &PdeGrid, u: &[f64], idx: &[usize]) -> Stencil {
    let d = grid.d();
    let at = |shift: &[(usize, i64)]| -> f64 {
        let mut j = idx.to_vec();
        for &(a, s) in shift {
            j[a] = (j[a] as i64 + s) as usize;
        }
        u[grid.flat(&j)]
    };
    let c = at(&[]);
    let mut st = Stencil { a: vec![0.0; d * d], p: vec![0.0; d], p_fwd: vec![0.0; d], p_bwd: vec![0.0; d] };
    for a in 0..d {
        let h = grid.dx(a);
        let (up, dn) = (at(&[(a, 1)]), at(&[(a, -1)]));
        st.p[a] = (up - dn) / (2.0 * h);
        st.p_fwd[a] = (up - c) / h;
        st.p_bwd[a] = (c - dn) / h;
        st.a[a * d + a] = (up - 2.0 * c + dn) / (h * h);
        for b in 0..a {
            let hb = grid.dx(b);
            let v = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)]) + at(&[(a, -1), (b, -1)])) / (4.0 * h * hb);
            st.a[a * d + b] = v;
            st.a[b * d + a] = v;
        }
    }
    st
}

/// `H_side` at interior node `flat` of `u` (at time `t`), with the largest
/// `|f|` evaluated along the way.
fn hamiltonian_at(spec: &ProblemSpec, grid: &PdeGrid, u: &[f64], flat: usize, t: f64, side: Side) -> (f64, f64) {
    let idx = grid.index(flat);
    let st = stencil(grid, u, &idx);
    let x = grid.point(flat);
    let m = spec.m();
    let (th, ga) = (spec.theta_grid(), spec.gamma_grid());
    let point = HamiltonianPoint { t, x: x.clone(), a: st.a, b: vec![0.0; m * grid.d()], p: st.p, y: u[flat], z: vec![0.0; m], hist: Vec::new() };
    let mut fmax: f64 = 0.0;
    let mut sigma = vec![0.0; grid.d() * m];
    let mut value = |i: usize, j: usize| -> f64 {
        let (tp, gp) = (th.point(i), ga.point(j));
        let v = ell_upwind(&point, &st.p_fwd, &st.p_bwd, tp, gp, spec);
        spec.diffusion(&CoeffInput { t, x: &x, theta: tp, gamma: gp, hist: &[] }, &mut sigma);
        let z: Vec<f64> = (0..m).map(|c| (0..grid.d()).map(|r| sigma[r * m + c] * point.p[r]).sum()).collect();
        let f = spec.driver(&DriverInput { t, x: &x, y: point.y, z: &z, theta: tp, gamma: gp, hist: &[] });
        fmax = fmax.max(f.abs());
        v
    };
    let h = match side {
        Side::Lower => (0..th.len()).map(|i| (0..ga.len()).map(|j| value(i, j)).fold(f64::INFINITY, f64::min)).fold(f64::NEG_INFINITY, f64::max),
        Side::Upper => (0..ga.len()).map(|j| (0..th.len()).map(|i| value(i, j)).fold(f64::NEG_INFINITY, f64::max)).fold(f64::INFINITY, f64::min),
    };
    (h, fmax)
}

/// Bounds on `|sigma sigma'|_ii`, `|b_i|` and `|sigma|` over nodes, controls
/// and three times; also flags degenerate state-dependent diffusion.
struct CoefficientScan {
    a_max: Vec<f64>,
    b_max: Vec<f64>,
    sigma_max: f64,
    degenerate_x_dependent: bool,
}

fn scan(spec: &ProblemSpec, grid: &PdeGrid) -> CoefficientScan {
    let (d, m) = (spec.d(), spec.m());
    let mut out = CoefficientScan { a_max: vec![0.0; d], b_max: vec![0.0; d], sigma_max: 0.0, degenerate_x_dependent: false };
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut s_ref = vec![0.0; d * m];
    let mut min_eig = f64::INFINITY;
    let mut varies = false;
    for &t in &[0.0, 0.5 * spec.horizon(), spec.horizon()] {
        for th in spec.theta_grid().points() {
            for ga in spec.gamma_grid().points() {
                for flat in 0..grid.node_count() {
                    let x = grid.point(flat);
                    let inp = CoeffInput { t, x: &x, theta: th, gamma: ga, hist: &[] };
                    spec.drift(&inp, &mut b);
                    spec.diffusion(&inp, &mut s);
                    if flat == 0 {
                        s_ref.copy_from_slice(&s);
                    } else if s.iter().zip(&s_ref).any(|(a, c)| (a - c).abs() > 1e-14) {
                        varies = true;
                    }
                    let aa: Vec<f64> = (0..d * d).map(|ik| {
                        let (i, k) = (ik / d, ik % d);
                        (0..m).map(|j| s[i * m + j] * s[k * m + j]).sum()
                    }).collect();
                    for i in 0..d {
                        out.a_max[i] = out.a_max[i].max(aa[i * d + i]);
                        out.b_max[i] = out.b_max[i].max(b[i].abs());
                    }
                    out.sigma_max = out.sigma_max.max(s.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
                    let eig = if d == 1 {
                        aa[0]
                    } else {
                        let tr = aa[0] + aa[3];
                        let det = aa[0] * aa[3] - aa[1] * aa[2];
                        0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())
                    };
                    min_eig = min_eig.min(eig);
                }
            }
        }
    }
    out.degenerate_x_dependent = varies && min_eig < 1e-8;
    out
}

/// Largest stable time step of the explicit scheme.
fn stable_dt(spec: &ProblemSpec, grid: &PdeGrid, sc: &CoefficientScan) -> f64 {
    let d = grid.d();
    let mut rate = spec.lipschitz();
    for a in 0..d {
        let h = grid.dx(a);
        rate += sc.a_max[a] * (1.0 + (d as f64 - 1.0)) / (h * h) + sc.b_max[a] / h + spec.lipschitz() * sc.sigma_max / h;
    }
    1.0 / rate
}

pub fn solve_hjbi_fd(spec: &ProblemSpec, grid: &PdeGrid, side: Side) -> Result<PdeSolution> {
    let d = spec.d();
    if d == 0 || d > 2 || grid.d() != d {
        return Err(Error::invalid("the oracle handles d = 1 or 2 with a matching grid"));
    }
    if grid.n_x < 3 {
        return Err(Error::invalid("need at least 3 nodes per axis"));
    }
    if !matches!(spec.randomness(), Randomness::Markovian) {
        return Err(Error::invalid("the oracle needs a Markovian problem"));
    }
    let sc = scan(spec, grid);
    if sc.degenerate_x_dependent {
        return Err(Error::DegenerateDiffusion("state-dependent diffusion degenerates on the box".into()));
    }
    let horizon = spec.horizon();
    let bound = stable_dt(spec, grid, &sc);
    let n_t = match grid.n_t {
        Some(n) => {
            let dt = horizon / n as f64;
            if dt > bound {
                return Err(Error::Cfl { dt, bound });
            }
            n
        }
        None => (horizon / (0.9 * bound)).ceil() as usize,
    };
    let dt = horizon / n_t as f64;
    let times: Vec<f64> = (0..=n_t).map(|k| if k == n_t { horizon } else { k as f64 * dt }).collect();
    let nodes = grid.node_count();
    let terminal: Vec<f64> = (0..nodes).map(|i| spec.terminal(&grid.point(i), &[])).collect();
    let mut u = vec![Vec::new(); n_t + 1];
    u[n_t] = terminal.clone();
    let mut excess = f64::NEG_INFINITY;
    for k in (0..n_t).rev() {
        let next = &u[k + 1];
        let t = times[k + 1];
        let lo = next.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let updated: Vec<(f64, f64)> = (0..nodes)
            .into_par_iter()
            .map(|flat| {
                if grid.is_boundary(&grid.index(flat)) {
                    (f64::NAN, 0.0)
                } else {
                    let (h, fmax) = hamiltonian_at(spec, grid, next, flat, t, side);
                    (next[flat] + dt * h, fmax)
                }
            })
            .collect();
        let fmax = updated.iter().map(|v| v.1).fold(0.0, f64::max);
        let mut cur: Vec<f64> = updated.iter().map(|v| v.0).collect();
        for &(v, _) in updated.iter() {
            if !v.is_nan() {
                excess = excess.max((lo - dt * fmax) - v).max(v - (hi + dt * fmax));
            }
        }
        fill_boundary(grid, &mut cur, &terminal);
        if excess > 1e-10 * (1.0 + hi.abs().max(lo.abs())) {
            return Err(Error::MaximumPrinciple { step: k, detail: format!("excess {excess:.3e}") });
        }
        u[k] = cur;
    }
    Ok(PdeSolution { grid: grid.clone(), times, u, side, max_principle_excess: excess })
}

fn fill_boundary(grid: &PdeGrid, u: &mut [f64], terminal: &[f64]) {
    let d = grid.d();
    let n = grid.n_x;
    for flat in 0..u.len() {
        let idx = grid.index(flat);
        if !grid.is_boundary(&idx) {
            continue;
        }
        match grid.boundary {
            Boundary::Clamped => u[flat] = terminal[flat],
            Boundary::OneSided => {
                // Pull every boundary coordinate one and two nodes inward.
                let inward = |steps: usize| -> Vec<usize> {
                    idx.iter()
                        .map(|&i| {
                            if i == 0 {
                                steps
                            } else if i == n - 1 {
                                n - 1 - steps
                            } else {
                                i
                            }
                        })
                        .collect()
                };
                let (a, b) = (inward(1), inward(2));
                let _ = d;
                u[flat] = 2.0 * u[grid.flat(&a)] - u[grid.flat(&b)];
            }
        }
    }
}

/// Sup of `|V - u|` over the tree nodes at least `2 dx` inside the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeComparison {
    pub discrepancy: f64,
    pub probes: usize,
}

pub fn compare_game_vs_pde(tree: &GameTree, field: &ValueField, pde: &PdeSolution) -> PdeComparison {
    let g = &pde.grid;
    let grid = tree.time_grid();
    let mut out = PdeComparison { discrepancy: 0.0, probes: 0 };
    for k in tree.start()..=grid.n_steps() {
        for i in 0..tree.slice_len(k) {
            let x = tree.state(k, i);
            let inside = (0..g.d()).all(|a| x[a] >= g.lo[a] + 2.0 * g.dx(a) && x[a] <= g.hi[a] - 2.0 * g.dx(a));
            if inside {
                out.discrepancy = out.discrepancy.max((field.at(k, i) - pde.eval(grid.time(k), x)).abs());
                out.probes += 1;
            }
        }
    }
    out
}

/// Discrete residual `(u_{k+1} + dt H(u_{k+1}) - u_k) / dt` at interior nodes.
pub fn scheme_residuals(spec: &ProblemSpec, field: &PdeSolution) -> Vec<Vec<f64>> {
    let g = &field.grid;
    let dt = field.dt();
    (0..field.times.len() - 1)
        .map(|k| {
            (0..g.node_count())
                .into_par_iter()
                .map(|flat| {
                    if g.is_boundary(&g.index(flat)) {
                        0.0
                    } else {
                        let (h, _) = hamiltonian_at(spec, g, &field.u[k + 1], flat, field.times[k + 1], field.side);
                        (field.u[k + 1][flat] + dt * h - field.u[k][flat]) / dt
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSuperReport {
    pub min_gap: f64,
    pub sub_min_residual: f64,
    pub super_max_residual: f64,
}

/// Minimum over the grid of `super - sub` after checking that `sub` has
/// residual `>= -tol` and `super` has residual `<= tol` everywhere.
pub fn sub_super_gap(spec: &ProblemSpec, sub: &PdeSolution, sup: &PdeSolution, tol: f64) -> Result<SubSuperReport> {
    if sub.grid != sup.grid || sub.times != sup.times {
        return Err(Error::invalid("fields must share their grid"));
    }
    let worst = |res: Vec<Vec<f64>>, lower: bool| -> (f64, (usize, usize)) {
        let mut best = (if lower { f64::INFINITY } else { f64::NEG_INFINITY }, (0, 0));
        for (k, row) in res.iter().enumerate() {
            for (i, &r) in row.iter().enumerate() {
                if (lower && r < best.0) || (!lower && r > best.0) {
                    best = (r, (k, i));
                }
            }
        }
        best
    };
    let (sub_min, at_sub) = worst(scheme_residuals(spec, sub), true);
    if sub_min < -tol {
        return Err(Error::invalid(format!("subsolution residual {sub_min:.3e} at step {}, node {}", at_sub.0, at_sub.1)));
    }
    let (sup_max, at_sup) = worst(scheme_residuals(spec, sup), false);
    if sup_max > tol {
        return Err(Error::invalid(format!("supersolution residual {sup_max:.3e} at step {}, node {}", at_sup.0, at_sup.1)));
    }
    let min_gap = sub
        .u
        .iter()
        .flatten()
        .zip(sup.u.iter().flatten())
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min);
    Ok(SubSuperReport { min_gap, sub_min_residual: sub_min, super_max_residual: sup_max })
}
