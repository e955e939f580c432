//! Pointwise Hamiltonians over finite control grids and the drivers built
//! from a smooth test field.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{CoeffInput, ControlGrid, DriverInput, ProblemSpec};

/// Arguments `(t, x, A, B, p, y, z)` of the generator. `a` is `d x d` and `b`
/// is `m x d`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    pub hist: Vec<f64>,
}

impl HamiltonianPoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(t: f64, x: Vec<f64>, a: Vec<f64>, b: Vec<f64>, p: Vec<f64>, y: f64, z: Vec<f64>, hist: Vec<f64>) -> Result<Self> {
        let d = x.len();
        let m = z.len();
        if a.len() != d * d || b.len() != m * d || p.len() != d {
            return Err(Error::invalid("Hamiltonian point has inconsistent dimensions"));
        }
        for i in 0..d {
            for j in 0..i {
                if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 {
                    return Err(Error::invalid("A must be symmetric"));
                }
            }
        }
        Ok(HamiltonianPoint { t, x, a, b, p, y, z, hist })
    }

    /// `(t, x, 0, 0, p, y, z)`.
    pub fn first_order(t: f64, x: Vec<f64>, p: Vec<f64>, y: f64, z: Vec<f64>) -> Self {
        let d = x.len();
        let m = z.len();
        HamiltonianPoint { t, x, a: vec![0.0; d * d], b: vec![0.0; m * d], p, y, z, hist: Vec::new() }
    }
}

/// `tr(1/2 s s' A + s B) + b'p + f(t, x, y, z + s'p, theta, gamma)`.
pub fn ell(point: &HamiltonianPoint, theta: &[f64], gamma: &[f64], spec: &ProblemSpec) -> f64 {
    ell_upwind(point, &point.p, &point.p, theta, gamma, spec)
}

/// [`ell`] with the drift term `b'p` read from `p_forward` where `b_i >= 0` and
/// from `p_backward` elsewhere; `s'p` still uses `point.p`.
pub fn ell_upwind(point: &HamiltonianPoint, p_forward: &[f64], p_backward: &[f64], theta: &[f64], gamma: &[f64], spec: &ProblemSpec) -> f64 {
    let (d, m) = (spec.d(), spec.m());
    let inp = CoeffInput { t: point.t, x: &point.x, theta, gamma, hist: &point.hist };
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    spec.drift(&inp, &mut b);
    spec.diffusion(&inp, &mut s);
    let mut second = 0.0;
    for i in 0..d {
        for k in 0..d {
            let ssik: f64 = (0..m).map(|j| s[i * m + j] * s[k * m + j]).sum();
            second += 0.5 * ssik * point.a[k * d + i];
        }
        for j in 0..m {
            second += s[i * m + j] * point.b[j * d + i];
        }
    }
    let first: f64 = (0..d).map(|i| b[i] * if b[i] >= 0.0 { p_forward[i] } else { p_backward[i] }).sum();
    let z_shift: Vec<f64> = (0..m)
        .map(|j| point.z[j] + (0..d).map(|i| s[i * m + j] * point.p[i]).sum::<f64>())
        .collect();
    let f = spec.driver(&DriverInput {
        t: point.t,
        x: &point.x,
        y: point.y,
        z: &z_shift,
        theta,
        gamma,
        hist: &point.hist,
    });
    second + first + f
}

/// Max-min selection: `theta` attains the outer max and `gamma_response[i]`
/// the inner min for `theta = i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerSelection {
    pub value: f64,
    pub theta: usize,
    pub gamma_response: Vec<usize>,
}

/// Min-max selection, the mirror of [`LowerSelection`].
#[derive(Debug, Clone, PartialEq)]
pub struct UpperSelection {
    pub value: f64,
    pub gamma: usize,
    pub theta_response: Vec<usize>,
}

/// `max_i min_j v[i * n_gamma + j]`; ties go to the lowest index.
pub fn max_min(values: &[f64], n_theta: usize, n_gamma: usize) -> LowerSelection {
    let mut gamma_response = Vec::with_capacity(n_theta);
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..n_theta {
        let row = &values[i * n_gamma..(i + 1) * n_gamma];
        let mut arg = 0;
        for j in 1..n_gamma {
            if row[j] < row[arg] {
                arg = j;
            }
        }
        gamma_response.push(arg);
        if row[arg] > best.0 {
            best = (row[arg], i);
        }
    }
    LowerSelection { value: best.0, theta: best.1, gamma_response }
}

/// `min_j max_i v[i * n_gamma + j]`; ties go to the lowest index.
pub fn min_max(values: &[f64], n_theta: usize, n_gamma: usize) -> UpperSelection {
    let mut theta_response = Vec::with_capacity(n_gamma);
    let mut best = (f64::INFINITY, 0);
    for j in 0..n_gamma {
        let mut arg = 0;
        for i in 1..n_theta {
            if values[i * n_gamma + j] > values[arg * n_gamma + j] {
                arg = i;
            }
        }
        theta_response.push(arg);
        let v = values[arg * n_gamma + j];
        if v < best.0 {
            best = (v, j);
        }
    }
    UpperSelection { value: best.0, gamma: best.1, theta_response }
}

fn ell_table(point: &HamiltonianPoint, spec: &ProblemSpec, th: &ControlGrid, ga: &ControlGrid) -> Vec<f64> {
    let mut out = Vec::with_capacity(th.len() * ga.len());
    for t in th.points() {
        for g in ga.points() {
            out.push(ell(point, t, g, spec));
        }
    }
    out
}

pub fn h_minus(point: &HamiltonianPoint, spec: &ProblemSpec, theta_grid: &ControlGrid, gamma_grid: &ControlGrid) -> LowerSelection {
    max_min(&ell_table(point, spec, theta_grid, gamma_grid), theta_grid.len(), gamma_grid.len())
}

pub fn h_plus(point: &HamiltonianPoint, spec: &ProblemSpec, theta_grid: &ControlGrid, gamma_grid: &ControlGrid) -> UpperSelection {
    min_max(&ell_table(point, spec, theta_grid, gamma_grid), theta_grid.len(), gamma_grid.len())
}

/// Default tolerance under which the Isaacs condition is considered to hold.
pub const ISAACS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IsaacsReport {
    pub max_gap: f64,
    pub worst: Option<usize>,
    pub holds: bool,
}

pub fn isaacs_check(spec: &ProblemSpec, sample: &[HamiltonianPoint], tol: f64) -> IsaacsReport {
    let (th, ga) = (spec.theta_grid(), spec.gamma_grid());
    let mut max_gap = f64::NEG_INFINITY;
    let mut worst = None;
    for (i, pt) in sample.iter().enumerate() {
        let table = ell_table(pt, spec, th, ga);
        let gap = min_max(&table, th.len(), ga.len()).value - max_min(&table, th.len(), ga.len()).value;
        if gap > max_gap {
            max_gap = gap;
            worst = Some(i);
        }
    }
    if sample.is_empty() {
        max_gap = 0.0;
    }
    IsaacsReport { max_gap, worst, holds: max_gap <= tol }
}

/// Random points with entries uniform in `[-scale, scale]`, `A` symmetrized and
/// `t` uniform on `[0, horizon]`.
pub fn random_points(spec: &ProblemSpec, n: usize, scale: f64, seed: u64) -> Vec<HamiltonianPoint> {
    let (d, m) = (spec.d(), spec.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..k).map(|_| rng.random_range(-scale..=scale)).collect() };
    (0..n)
        .map(|_| {
            let t = rng.random_range(0.0..=spec.horizon());
            let x = draw(d, &mut rng);
            let mut a = draw(d * d, &mut rng);
            for i in 0..d {
                for j in 0..i {
                    let v = 0.5 * (a[i * d + j] + a[j * d + i]);
                    a[i * d + j] = v;
                    a[j * d + i] = v;
                }
            }
            let b = draw(m * d, &mut rng);
            let p = draw(d, &mut rng);
            let y = rng.random_range(-scale..=scale);
            let z = draw(m, &mut rng);
            let hist = draw(spec.history_len(), &mut rng);
            HamiltonianPoint { t, x, a, b, p, y, z, hist }
        })
        .collect()
}

type ScalarField = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type VectorField = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Smooth test function with its derivatives. `d_omega` is `R^m`-valued and
/// `d_omega_grad` is its spatial gradient, `m x d` row-major.
#[derive(Clone)]
pub struct TestField {
    pub d: usize,
    pub m: usize,
    pub phi: Arc<ScalarField>,
    pub grad: Arc<VectorField>,
    pub hess: Arc<VectorField>,
    pub dt_phi: Arc<ScalarField>,
    pub d_omega: Arc<VectorField>,
    pub d_omega_grad: Arc<VectorField>,
}

impl std::fmt::Debug for TestField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestField").field("d", &self.d).field("m", &self.m).finish_non_exhaustive()
    }
}

impl TestField {
    /// Markovian field: the pathwise derivatives reduce to `dt_phi` and zero.
    pub fn markovian(
        d: usize,
        m: usize,
        phi: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        hess: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        dt_phi: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestField {
            d,
            m,
            phi: Arc::new(phi),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            dt_phi: Arc::new(dt_phi),
            d_omega: Arc::new(|_, _, o| o.fill(0.0)),
            d_omega_grad: Arc::new(|_, _, o| o.fill(0.0)),
        }
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self::markovian(d, m, |_, _| 0.0, |_, _, o| o.fill(0.0), |_, _, o| o.fill(0.0), |_, _| 0.0)
    }

    /// `phi(t, x) = a e^{-t} sum_i sin(x_i)`.
    pub fn sine(d: usize, m: usize, a: f64) -> Self {
        Self::markovian(
            d,
            m,
            move |t, x| a * (-t).exp() * x.iter().map(|v| v.sin()).sum::<f64>(),
            move |t, x, o| {
                for (oi, xi) in o.iter_mut().zip(x) {
                    *oi = a * (-t).exp() * xi.cos();
                }
            },
            move |t, x, o| {
                o.fill(0.0);
                for i in 0..x.len() {
                    o[i * x.len() + i] = -a * (-t).exp() * x[i].sin();
                }
            },
            move |t, x| -a * (-t).exp() * x.iter().map(|v| v.sin()).sum::<f64>(),
        )
    }

    /// Max deviation of the supplied `D phi`, `D^2 phi` and `dt_phi` from central
    /// differences at random probes in `[-2, 2]^d x [0, 1]`.
    pub fn consistency_error(&self, probes: usize, seed: u64) -> f64 {
        let d = self.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let mut g = vec![0.0; d];
        let mut hs = vec![0.0; d * d];
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for _ in 0..probes {
            let t = rng.random_range(0.0..1.0);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            (self.grad)(t, &x, &mut g);
            (self.hess)(t, &x, &mut hs);
            for i in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = ((self.phi)(t, &xp) - (self.phi)(t, &xm)) / (2.0 * h);
                worst = worst.max((fd - g[i]).abs());
                (self.grad)(t, &xp, &mut gp);
                (self.grad)(t, &xm, &mut gm);
                for j in 0..d {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                    worst = worst.max((fd2 - hs[i * d + j]).abs());
                }
            }
            let fdt = ((self.phi)(t + h, &x) - (self.phi)(t - h, &x)) / (2.0 * h);
            worst = worst.max((fdt - (self.dt_phi)(t, &x)).abs());
        }
        worst
    }

    fn generator_point(&self, s: f64, x: &[f64], y: f64, z: &[f64], hist: &[f64]) -> HamiltonianPoint {
        let (d, m) = (self.d, self.m);
        let mut p = vec![0.0; d];
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; m * d];
        let mut om = vec![0.0; m];
        (self.grad)(s, x, &mut p);
        (self.hess)(s, x, &mut a);
        (self.d_omega_grad)(s, x, &mut b);
        (self.d_omega)(s, x, &mut om);
        HamiltonianPoint {
            t: s,
            x: x.to_vec(),
            a,
            b,
            p,
            y: y + (self.phi)(s, x),
            z: z.iter().zip(&om).map(|(z, o)| z + o).collect(),
            hist: hist.to_vec(),
        }
    }
}

/// The driver `F(s, x, y, z, theta, gamma)` built from a test field.
#[allow(clippy::too_many_arguments)]
pub fn f_driver(field: &TestField, spec: &ProblemSpec, s: f64, x: &[f64], y: f64, z: &[f64], theta: &[f64], gamma: &[f64], hist: &[f64]) -> f64 {
    (field.dt_phi)(s, x) + ell(&field.generator_point(s, x, y, z, hist), theta, gamma, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FZeroOne {
    pub f0: f64,
    /// `F_1(theta_i) = min_gamma F`.
    pub f1: Vec<f64>,
    pub gamma_selection: Vec<usize>,
    pub theta_star: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn f_zero_f_one(field: &TestField, spec: &ProblemSpec, s: f64, x: &[f64], y: f64, z: &[f64], hist: &[f64]) -> FZeroOne {
    let (th, ga) = (spec.theta_grid(), spec.gamma_grid());
    let pt = field.generator_point(s, x, y, z, hist);
    let dt = (field.dt_phi)(s, x);
    let table: Vec<f64> = th
        .points()
        .iter()
        .flat_map(|t| ga.points().iter().map(move |g| (t, g)))
        .map(|(t, g)| dt + ell(&pt, t, g, spec))
        .collect();
    let sel = max_min(&table, th.len(), ga.len());
    let f1 = sel.gamma_response.iter().enumerate().map(|(i, &j)| table[i * ga.len() + j]).collect();
    FZeroOne { f0: sel.value, f1, gamma_selection: sel.gamma_response, theta_star: sel.theta }
}

/// Probe estimates of `sup |F(., 0, 0)|` and of the Lipschitz modulus of `F`
/// in `x` over `[0, T] x [-R, R]^d`, all control pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverModulus {
    pub bound: f64,
    pub lipschitz_x: f64,
}

pub fn f_driver_modulus(field: &TestField, spec: &ProblemSpec, radius: f64, probes: usize, seed: u64) -> DriverModulus {
    let (d, m) = (spec.d(), spec.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = vec![0.0; m];
    let hist = vec![0.0; spec.history_len()];
    let mut out = DriverModulus { bound: 0.0, lipschitz_x: 0.0 };
    for _ in 0..probes {
        let s = rng.random_range(0.0..=spec.horizon());
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
        let xb: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.1..=0.1)).collect();
        let dist = x.iter().zip(&xb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        for th in spec.theta_grid().points() {
            for ga in spec.gamma_grid().points() {
                let fa = f_driver(field, spec, s, &x, 0.0, &z, th, ga, &hist);
                let fb = f_driver(field, spec, s, &xb, 0.0, &z, th, ga, &hist);
                out.bound = out.bound.max(fa.abs());
                if dist > 0.0 {
                    out.lipschitz_x = out.lipschitz_x.max((fa - fb).abs() / dist);
                }
            }
        }
    }
    out
}
