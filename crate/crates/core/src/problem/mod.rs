//! Problem data: coefficients `b`, `sigma`, `f`, `Phi`, control grids, and a
//! probe-based check of the standing Lipschitz/boundedness assumption.
//!
//! Coefficients are opaque callables. They must be pure: the same inputs
//! always give the same output, and concurrent calls are allowed. Nothing in
//! the crate can verify this; it is a contract on user-supplied closures.

pub mod smoothing;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use smoothing::{barrier_g, bump, mollify, Barrier, BarrierEval, Mollified, MollifierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlLabel {
    Theta,
    Gamma,
}

/// Finite discretization of a compact control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    points: Vec<Vec<f64>>,
    label: ControlLabel,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>, label: ControlLabel) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("control grid must be non-empty"));
        }
        let n = points[0].len();
        if n == 0 {
            return Err(Error::invalid("control points must have dimension >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::invalid("control points must share a dimension"));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("control point {i} is not finite")));
            }
            if points[..i].iter().any(|q| q == p) {
                return Err(Error::invalid(format!("duplicate control point {p:?}")));
            }
        }
        Ok(ControlGrid { points, label })
    }

    /// Scalar grid from a list of values.
    pub fn scalar(values: &[f64], label: ControlLabel) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), label)
    }

    /// Uniform tensor grid on the box `[lo, hi]` with `per_axis` points per axis.
    pub fn uniform_box(lo: &[f64], hi: &[f64], per_axis: usize, label: ControlLabel) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || per_axis == 0 {
            return Err(Error::invalid("box grid needs matching non-empty bounds and per_axis >= 1"));
        }
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| {
                if per_axis == 1 {
                    vec![0.5 * (a + b)]
                } else {
                    (0..per_axis).map(|i| a + (b - a) * i as f64 / (per_axis - 1) as f64).collect()
                }
            })
            .collect();
        let total = per_axis.pow(lo.len() as u32);
        let points = (0..total)
            .map(|mut idx| {
                axes.iter()
                    .map(|ax| {
                        let v = ax[idx % per_axis];
                        idx /= per_axis;
                        v
                    })
                    .collect()
            })
            .collect();
        Self::new(points, label)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn label(&self) -> ControlLabel {
        self.label
    }
}

/// Whether coefficients read the noise history.
#[derive(Debug, Clone, PartialEq)]
pub enum Randomness {
    Markovian,
    /// Coefficients read `W_{t_i ∧ t}` at the listed partition times.
    DiscreteRandom { partition: Vec<f64> },
}

impl Randomness {
    pub fn partition(&self) -> &[f64] {
        match self {
            Randomness::Markovian => &[],
            Randomness::DiscreteRandom { partition } => partition,
        }
    }
}

/// Arguments of `b` and `sigma`.
#[derive(Debug, Clone, Copy)]
pub struct CoeffInput<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub theta: &'a [f64],
    pub gamma: &'a [f64],
    /// Flattened `[W_{t_1 ∧ t}, ..., W_{t_N ∧ t}]`, empty when Markovian.
    pub hist: &'a [f64],
}

/// Arguments of the driver `f`.
#[derive(Debug, Clone, Copy)]
pub struct DriverInput<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub theta: &'a [f64],
    pub gamma: &'a [f64],
    pub hist: &'a [f64],
}

pub type DriftFn = dyn Fn(&CoeffInput, &mut [f64]) + Send + Sync;
/// Writes `sigma` row-major: `out[i*m + j] = sigma_{ij}`.
pub type DiffusionFn = dyn Fn(&CoeffInput, &mut [f64]) + Send + Sync;
pub type DriverFn = dyn Fn(&DriverInput) -> f64 + Send + Sync;
pub type TerminalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Coefficients, control grids, horizon and the constant `L`.
#[derive(Clone)]
pub struct ProblemSpec {
    descriptor: String,
    d: usize,
    m: usize,
    horizon: f64,
    lipschitz: f64,
    randomness: Randomness,
    theta_grid: ControlGrid,
    gamma_grid: ControlGrid,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    driver: Arc<DriverFn>,
    terminal: Arc<TerminalFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("descriptor", &self.descriptor)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("lipschitz", &self.lipschitz)
            .field("randomness", &self.randomness)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Problem with zero coefficients; set them with the `with_*` methods.
    pub fn new(
        descriptor: impl Into<String>,
        d: usize,
        m: usize,
        horizon: f64,
        lipschitz: f64,
        theta_grid: ControlGrid,
        gamma_grid: ControlGrid,
    ) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("state and Wiener dimensions must be >= 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive and finite"));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid("L must be non-negative and finite"));
        }
        Ok(ProblemSpec {
            descriptor: descriptor.into(),
            d,
            m,
            horizon,
            lipschitz,
            randomness: Randomness::Markovian,
            theta_grid,
            gamma_grid,
            drift: Arc::new(|_, out| out.fill(0.0)),
            diffusion: Arc::new(|_, out| out.fill(0.0)),
            driver: Arc::new(|_| 0.0),
            terminal: Arc::new(|_, _| 0.0),
        })
    }

    pub fn with_drift(mut self, b: impl Fn(&CoeffInput, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(b);
        self
    }

    pub fn with_diffusion(mut self, s: impl Fn(&CoeffInput, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(s);
        self
    }

    pub fn with_driver(mut self, f: impl Fn(&DriverInput) -> f64 + Send + Sync + 'static) -> Self {
        self.driver = Arc::new(f);
        self
    }

    pub fn with_terminal(mut self, phi: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(phi);
        self
    }

    pub fn with_randomness(mut self, randomness: Randomness) -> Self {
        self.randomness = randomness;
        self
    }

    pub fn with_grids(mut self, theta: ControlGrid, gamma: ControlGrid) -> Self {
        self.theta_grid = theta;
        self.gamma_grid = gamma;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.descriptor = descriptor.into();
        self
    }

    /// `b + eps * b_tilde` and `f + eps * f_tilde`.
    pub fn perturbed(
        &self,
        eps: f64,
        b_tilde: Arc<DriftFn>,
        f_tilde: Arc<DriverFn>,
    ) -> ProblemSpec {
        let base_b = self.drift.clone();
        let base_f = self.driver.clone();
        let d = self.d;
        let mut out = self.clone();
        out.drift = Arc::new(move |inp, o| {
            base_b(inp, o);
            let mut extra = vec![0.0; d];
            b_tilde(inp, &mut extra);
            for (a, e) in o.iter_mut().zip(&extra) {
                *a += eps * e;
            }
        });
        out.driver = Arc::new(move |inp| base_f(inp) + eps * f_tilde(inp));
        out.descriptor = format!("{}+perturbed({eps})", self.descriptor);
        out
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Hex SHA-256 of the descriptor.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.descriptor.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn randomness(&self) -> &Randomness {
        &self.randomness
    }

    pub fn theta_grid(&self) -> &ControlGrid {
        &self.theta_grid
    }

    pub fn gamma_grid(&self) -> &ControlGrid {
        &self.gamma_grid
    }

    pub fn drift(&self, inp: &CoeffInput, out: &mut [f64]) {
        (self.drift)(inp, out)
    }

    pub fn diffusion(&self, inp: &CoeffInput, out: &mut [f64]) {
        (self.diffusion)(inp, out)
    }

    pub fn driver(&self, inp: &DriverInput) -> f64 {
        (self.driver)(inp)
    }

    pub fn terminal(&self, x: &[f64], hist: &[f64]) -> f64 {
        (self.terminal)(x, hist)
    }

    pub fn drift_fn(&self) -> Arc<DriftFn> {
        self.drift.clone()
    }

    pub fn driver_fn(&self) -> Arc<DriverFn> {
        self.driver.clone()
    }

    pub fn terminal_fn(&self) -> Arc<TerminalFn> {
        self.terminal.clone()
    }

    /// Length of the flattened noise history.
    pub fn history_len(&self) -> usize {
        self.randomness.partition().len() * self.m
    }

    /// Overwrites the history entries that are still live at time `t`
    /// (partition points `t_i >= t`) with the current Wiener value.
    pub fn update_history(&self, t: f64, w: &[f64], hist: &mut [f64]) {
        let m = self.m;
        for (i, &ti) in self.randomness.partition().iter().enumerate() {
            if ti >= t - 1e-12 {
                hist[i * m..(i + 1) * m].copy_from_slice(w);
            }
        }
    }

    /// Fails unless `dt * L < 1` on the grid.
    pub fn check_step(&self, grid: &crate::grid::TimeGrid) -> Result<()> {
        let product = grid.dt() * self.lipschitz;
        if product < 1.0 {
            Ok(())
        } else {
            let span = grid.horizon() - grid.t0();
            let min_steps = (span * self.lipschitz).floor() as usize + 1;
            Err(Error::StepTooLarge { product, min_steps })
        }
    }
}

/// A pair of probe points that witnesses a violated bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub what: String,
    pub quotient: f64,
    pub point: Vec<f64>,
    pub other: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A1Report {
    /// Largest `|(b, sigma)| + |f(., 0, 0, .)|` seen on the probes.
    pub max_bound: f64,
    /// Largest coefficient difference quotient.
    pub max_quotient: f64,
    /// Largest difference quotient of the terminal map in `x`.
    pub terminal_quotient: f64,
    pub pass: bool,
    pub witness: Option<Witness>,
}

/// Relative slack allowed on Lipschitz quotients.
pub const A1_SLACK: f64 = 1.01;

/// Probe box half-width for states, `y` and `z`.
const PROBE_RADIUS: f64 = 5.0;

struct Probe {
    t: f64,
    x: Vec<f64>,
    y: f64,
    z: Vec<f64>,
    theta: usize,
    gamma: usize,
    hist: Vec<f64>,
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Probe-based check of boundedness and Lipschitz continuity.
///
/// The bound is measured on `|(b, sigma)| + |f(t, x, 0, 0, theta, gamma)|`;
/// quotients use `|d(b, sigma)| + |df|` over `|dx| + |dy| + |dz| + |dtheta| + |dgamma|`
/// on near and far probe pairs sharing `t` and the noise history. Violations are
/// reported with the witnessing pair rather than raised.
pub fn validate_a1(spec: &ProblemSpec, probes: usize, seed: u64) -> Result<A1Report> {
    if probes == 0 {
        return Err(Error::invalid("validate_a1 needs at least one probe"));
    }
    let (d, m) = (spec.d(), spec.m());
    let l = spec.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hist_len = spec.history_len();
    let t_scale = spec.horizon().sqrt();

    let draw = |rng: &mut ChaCha8Rng| -> Probe {
        Probe {
            t: rng.random_range(0.0..=spec.horizon()),
            x: (0..d).map(|_| rng.random_range(-PROBE_RADIUS..PROBE_RADIUS)).collect(),
            y: rng.random_range(-PROBE_RADIUS..PROBE_RADIUS),
            z: (0..m).map(|_| rng.random_range(-PROBE_RADIUS..PROBE_RADIUS)).collect(),
            theta: rng.random_range(0..spec.theta_grid().len()),
            gamma: rng.random_range(0..spec.gamma_grid().len()),
            hist: (0..hist_len)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(rng);
                    g * t_scale
                })
                .collect(),
        }
    };

    let eval = |p: &Probe| -> (Vec<f64>, f64, f64) {
        let inp = CoeffInput {
            t: p.t,
            x: &p.x,
            theta: spec.theta_grid().point(p.theta),
            gamma: spec.gamma_grid().point(p.gamma),
            hist: &p.hist,
        };
        let mut bs = vec![0.0; d + d * m];
        let (b, s) = bs.split_at_mut(d);
        spec.drift(&inp, b);
        spec.diffusion(&inp, s);
        let f = spec.driver(&DriverInput {
            t: p.t,
            x: &p.x,
            y: p.y,
            z: &p.z,
            theta: inp.theta,
            gamma: inp.gamma,
            hist: &p.hist,
        });
        let zero_z = vec![0.0; m];
        let f0 = spec.driver(&DriverInput {
            t: p.t,
            x: &p.x,
            y: 0.0,
            z: &zero_z,
            theta: inp.theta,
            gamma: inp.gamma,
            hist: &p.hist,
        });
        (bs, f, f0)
    };

    let mut report = A1Report {
        max_bound: 0.0,
        max_quotient: 0.0,
        terminal_quotient: 0.0,
        pass: true,
        witness: None,
    };
    let flatten = |p: &Probe| -> Vec<f64> {
        let mut v = vec![p.t];
        v.extend(&p.x);
        v.push(p.y);
        v.extend(&p.z);
        v.extend(spec.theta_grid().point(p.theta));
        v.extend(spec.gamma_grid().point(p.gamma));
        v
    };

    for i in 0..probes {
        let p = draw(&mut rng);
        let (bs, f, f0) = eval(&p);
        if bs.iter().any(|v| !v.is_finite()) || !f.is_finite() {
            return Err(Error::NonFinite { what: "coefficient", location: format!("probe {i}") });
        }
        let bound = euclid(&bs) + f0.abs();
        if bound > report.max_bound {
            report.max_bound = bound;
            if bound > l && report.pass {
                report.pass = false;
                report.witness = Some(Witness {
                    what: "bound".into(),
                    quotient: bound,
                    point: flatten(&p),
                    other: vec![],
                });
            }
        }

        // Partner: near perturbation on even probes, independent draw on odd ones.
        let mut q = draw(&mut rng);
        q.t = p.t;
        q.hist = p.hist.clone();
        if i % 2 == 0 {
            let scale = 10f64.powf(rng.random_range(-3.0..0.0));
            q.x = p.x.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
            q.y = p.y + scale * rng.random_range(-1.0..1.0);
            q.z = p.z.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
            if rng.random_bool(0.5) {
                q.theta = p.theta;
            }
            if rng.random_bool(0.5) {
                q.gamma = p.gamma;
            }
        }
        let (bq, fq, _) = eval(&q);
        let num = dist(&bs, &bq) + (f - fq).abs();
        let den = dist(&p.x, &q.x)
            + (p.y - q.y).abs()
            + dist(&p.z, &q.z)
            + dist(spec.theta_grid().point(p.theta), spec.theta_grid().point(q.theta))
            + dist(spec.gamma_grid().point(p.gamma), spec.gamma_grid().point(q.gamma));
        if den > 0.0 {
            let quot = num / den;
            if quot > report.max_quotient {
                report.max_quotient = quot;
                if quot > l * A1_SLACK && report.pass {
                    report.pass = false;
                    report.witness = Some(Witness {
                        what: "coefficient Lipschitz quotient".into(),
                        quotient: quot,
                        point: flatten(&p),
                        other: flatten(&q),
                    });
                }
            }
        }

        let phi_p = spec.terminal(&p.x, &p.hist);
        let phi_q = spec.terminal(&q.x, &p.hist);
        let dx = dist(&p.x, &q.x);
        if dx > 0.0 {
            let quot = (phi_p - phi_q).abs() / dx;
            if quot > report.terminal_quotient {
                report.terminal_quotient = quot;
                if quot > l * A1_SLACK && report.pass {
                    report.pass = false;
                    report.witness = Some(Witness {
                        what: "terminal Lipschitz quotient".into(),
                        quotient: quot,
                        point: p.x.clone(),
                        other: q.x.clone(),
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grids() -> (ControlGrid, ControlGrid) {
        (
            ControlGrid::uniform_box(&[-1.0], &[1.0], 5, ControlLabel::Theta).unwrap(),
            ControlGrid::scalar(&[0.0], ControlLabel::Gamma).unwrap(),
        )
    }

    #[test]
    fn control_grid_validation() {
        assert!(ControlGrid::new(vec![], ControlLabel::Theta).is_err());
        assert!(ControlGrid::scalar(&[1.0, 1.0], ControlLabel::Theta).is_err());
        assert!(ControlGrid::scalar(&[f64::NAN], ControlLabel::Theta).is_err());
        let g = ControlGrid::uniform_box(&[-1.0, 0.0], &[1.0, 2.0], 3, ControlLabel::Gamma).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(0), &[-1.0, 0.0]);
        assert_eq!(g.point(8), &[1.0, 2.0]);
    }

    #[test]
    fn sine_drift_passes() {
        let (th, ga) = unit_grids();
        let spec = ProblemSpec::new("sine", 1, 1, 1.0, 2.0, th, ga)
            .unwrap()
            .with_drift(|inp, out| out[0] = inp.x[0].sin() * inp.theta[0])
            .with_diffusion(|_, out| out[0] = 1.0)
            .with_terminal(|x, _| x[0].tanh());
        let rep = validate_a1(&spec, 2000, 1).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_bound <= 2f64.sqrt() + 1e-12);
    }

    #[test]
    fn quadratic_driver_fails_with_witness() {
        let (th, ga) = unit_grids();
        let spec = ProblemSpec::new("quad", 1, 1, 1.0, 1.0, th, ga)
            .unwrap()
            .with_driver(|inp| inp.y * inp.y);
        let rep = validate_a1(&spec, 500, 3).unwrap();
        assert!(!rep.pass);
        let w = rep.witness.unwrap();
        assert!(w.quotient > 1.01);
        // y sits at index 1 + d of the flattened probe.
        assert!(w.point[2].abs() > 0.5 || w.other[2].abs() > 0.5);
    }

    #[test]
    fn zero_problem_passes() {
        let (th, ga) = unit_grids();
        let spec = ProblemSpec::new("zero", 2, 1, 1.0, 0.1, th, ga).unwrap();
        let rep = validate_a1(&spec, 300, 9).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_bound, 0.0);
    }

    #[test]
    fn history_update_freezes_past_partition_points() {
        let (th, ga) = unit_grids();
        let spec = ProblemSpec::new("hist", 1, 1, 1.0, 1.0, th, ga)
            .unwrap()
            .with_randomness(Randomness::DiscreteRandom { partition: vec![0.5, 1.0] });
        let mut h = vec![0.0; 2];
        spec.update_history(0.25, &[0.3], &mut h);
        assert_eq!(h, vec![0.3, 0.3]);
        spec.update_history(0.5, &[0.7], &mut h);
        assert_eq!(h, vec![0.7, 0.7]);
        spec.update_history(0.75, &[-0.2], &mut h);
        assert_eq!(h, vec![0.7, -0.2]);
    }

    #[test]
    fn step_check() {
        let (th, ga) = unit_grids();
        let spec = ProblemSpec::new("s", 1, 1, 1.0, 4.0, th, ga).unwrap();
        let ok = crate::grid::TimeGrid::new(0.0, 1.0, 5).unwrap();
        let coarse = crate::grid::TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(spec.check_step(&ok).is_ok());
        match spec.check_step(&coarse) {
            Err(Error::StepTooLarge { min_steps, .. }) => assert_eq!(min_steps, 5),
            other => panic!("{other:?}"),
        }
    }
}
