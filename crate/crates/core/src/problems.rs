//! Named problems with their known facts, and the property traceability
//! matrix.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{isaacs_check, random_points, ISAACS_TOL};
use crate::problem::{ControlGrid, ControlLabel, ProblemSpec, Randomness};

/// Where a stated fact comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Stated by the underlying theory.
    Theorem,
    /// Immediate from the definitions.
    Trivial,
    /// Worked out for this problem (closed form, enumeration, probe run).
    Derived,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fact {
    pub statement: &'static str,
    pub basis: Basis,
}

pub type ExactValue = fn(f64, &[f64]) -> f64;

#[derive(Clone)]
pub struct NamedProblem {
    pub key: &'static str,
    pub summary: &'static str,
    /// Expected outcome of the Hamiltonian sample check.
    pub isaacs: bool,
    pub facts: Vec<Fact>,
    /// Closed-form value `V(t, x)` when one is known.
    pub exact: Option<ExactValue>,
    build: fn() -> ProblemSpec,
}

impl std::fmt::Debug for NamedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NamedProblem").field("key", &self.key).field("isaacs", &self.isaacs).finish_non_exhaustive()
    }
}

impl NamedProblem {
    pub fn spec(&self) -> ProblemSpec {
        (self.build)()
    }

    /// Isaacs status measured on 500 random Hamiltonian points.
    pub fn measured_isaacs(&self) -> bool {
        let spec = self.spec();
        isaacs_check(&spec, &random_points(&spec, 500, 2.0, 7), ISAACS_TOL).holds
    }
}

fn grid(values: &[f64], label: ControlLabel) -> ControlGrid {
    ControlGrid::scalar(values, label).expect("static control grid")
}

fn five(label: ControlLabel) -> ControlGrid {
    ControlGrid::uniform_box(&[-1.0], &[1.0], 5, label).expect("static control grid")
}

fn singleton(label: ControlLabel) -> ControlGrid {
    grid(&[0.0], label)
}

fn new(key: &str, l: f64, th: ControlGrid, ga: ControlGrid) -> ProblemSpec {
    ProblemSpec::new(key, 1, 1, 1.0, l, th, ga).expect("static problem")
}

fn cancel_drift() -> ProblemSpec {
    new("cancel-drift", 3.0, five(ControlLabel::Theta), five(ControlLabel::Gamma))
        .with_drift(|i, o| o[0] = i.theta[0] + i.gamma[0])
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_terminal(|x, _| x[0])
}

fn isaacs_gap() -> ProblemSpec {
    let pm = [-1.0, 1.0];
    new("isaacs-gap", 1.5, grid(&pm, ControlLabel::Theta), grid(&pm, ControlLabel::Gamma))
        .with_drift(|i, o| o[0] = i.theta[0] * i.gamma[0])
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_terminal(|x, _| x[0].sin())
}

fn one_player() -> ProblemSpec {
    new("one-player", 1.5, singleton(ControlLabel::Theta), five(ControlLabel::Gamma))
        .with_drift(|i, o| o[0] = i.theta[0] + i.gamma[0])
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_terminal(|x, _| x[0])
}

fn linear_driver() -> ProblemSpec {
    new("linear-driver", 1.5, singleton(ControlLabel::Theta), singleton(ControlLabel::Gamma))
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_driver(|i| 0.3 * i.y + 0.4 * i.z[0] + 0.1)
        .with_terminal(|x, _| x[0].tanh())
}

fn random_terminal() -> ProblemSpec {
    let g = [-1.0, 0.0, 1.0];
    new("random-terminal", 1.5, grid(&g, ControlLabel::Theta), grid(&g, ControlLabel::Gamma))
        .with_randomness(Randomness::DiscreteRandom { partition: vec![1.0] })
        .with_drift(|i, o| o[0] = 0.3 * (i.theta[0] + i.gamma[0]))
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_driver(|i| 0.2 * i.y.sin())
        .with_terminal(|x, w| (x[0] + 0.5 * w[0]).tanh())
}

fn heat_check() -> ProblemSpec {
    new("heat-check", 1.0, singleton(ControlLabel::Theta), singleton(ControlLabel::Gamma))
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_terminal(|x, _| x[0].cos())
}

fn clipped() -> ProblemSpec {
    let g = [-1.0, 0.0, 1.0];
    new("clipped", 1.0, grid(&g, ControlLabel::Theta), grid(&g, ControlLabel::Gamma))
        .with_drift(|i, o| o[0] = 0.3 * (i.theta[0] + i.gamma[0]))
        .with_diffusion(|_, o| o[0] = 0.6)
        .with_terminal(|x, _| x[0].clamp(-1.0, 1.0))
}

fn separable_sine() -> ProblemSpec {
    let g = [-1.0, 0.0, 1.0];
    new("separable-sine", 2.0, grid(&g, ControlLabel::Theta), grid(&g, ControlLabel::Gamma))
        .with_drift(|i, o| o[0] = 0.5 * (i.theta[0] + i.gamma[0]))
        .with_diffusion(|_, o| o[0] = 1.0)
        .with_terminal(|x, _| x[0].sin())
}

pub fn catalog() -> Vec<NamedProblem> {
    use Basis::*;
    let fact = |statement, basis| Fact { statement, basis };
    vec![
        NamedProblem {
            key: "cancel-drift",
            summary: "b = theta + gamma on 5-point grids of [-1, 1], sigma = 1, f = 0, Phi(x) = x, L = 3",
            isaacs: true,
            facts: vec![
                fact("V(t, x) = U(t, x) = x: the optimal drifts +1 and -1 cancel and X is a martingale", Derived),
                fact("H- = H+ since the drift is separable in theta and gamma", Derived),
                fact("spatial difference quotient of V equals 1", Derived),
            ],
            exact: Some(|_, x| x[0]),
            build: cancel_drift,
        },
        NamedProblem {
            key: "isaacs-gap",
            summary: "b = theta gamma with theta, gamma in {-1, 1}, sigma = 1, f = 0, Phi = sin, L = 1.5",
            isaacs: false,
            facts: vec![
                fact("at p = 1 (A = 0, y = z = 0): H- = -1 and H+ = +1 by enumeration of 4 pairs", Derived),
                fact("H- <= H+ at every point", Trivial),
            ],
            exact: None,
            build: isaacs_gap,
        },
        NamedProblem {
            key: "one-player",
            summary: "singleton theta, b = gamma on a 5-point grid of [-1, 1], sigma = 1, f = 0, Phi(x) = x, L = 1.5",
            isaacs: true,
            facts: vec![
                fact("lower value is pure minimization over gamma", Trivial),
                fact("V(t, x) = x - (T - t): the minimizer always plays gamma = -1", Derived),
            ],
            exact: Some(|t, x| x[0] - (1.0 - t)),
            build: one_player,
        },
        NamedProblem {
            key: "linear-driver",
            summary: "singleton controls, b = 0, sigma = 1, f = 0.3 y + 0.4 z + 0.1, Phi = tanh, L = 1.5",
            isaacs: true,
            facts: vec![
                fact("value solves the linear parabolic PDE u_t + u''/2 + 0.4 u' + 0.3 u + 0.1 = 0", Derived),
                fact("lattice BSDE with constant controls equals the game value", Trivial),
            ],
            exact: None,
            build: linear_driver,
        },
        NamedProblem {
            key: "random-terminal",
            summary: "Phi = tanh(x + 0.5 W_T) with noise partition {T}, b = 0.3 (theta + gamma), sigma = 1, f = 0.2 sin y",
            isaacs: true,
            facts: vec![
                fact("value depends on the noise only through W at the partition times", Theorem),
                fact("lower <= upper nodewise on a shared tree", Derived),
            ],
            exact: None,
            build: random_terminal,
        },
        NamedProblem {
            key: "heat-check",
            summary: "b = 0, sigma = 1, f = 0, Phi = cos, singleton controls, L = 1",
            isaacs: true,
            facts: vec![fact("u(t, x) = exp(-(T - t)/2) cos x (heat kernel)", Derived)],
            exact: Some(|t, x| (-(1.0 - t) / 2.0).exp() * x[0].cos()),
            build: heat_check,
        },
        NamedProblem {
            key: "clipped",
            summary: "b = 0.3 (theta + gamma) on {-1, 0, 1}, sigma = 0.6, f = 0, Phi = clip(x, -1, 1), L = 1",
            isaacs: true,
            facts: vec![
                fact("|V| <= L (T + 1) = 2", Theorem),
                fact("|V| <= 1 since f = 0 and |Phi| <= 1", Trivial),
            ],
            exact: None,
            build: clipped,
        },
        NamedProblem {
            key: "separable-sine",
            summary: "b = 0.5 (theta + gamma) on {-1, 0, 1}, sigma = 1, f = 0, Phi = sin, L = 2",
            isaacs: true,
            facts: vec![
                fact("H- = H+ (separable drift), so the discrete gap V - U vanishes under refinement", Theorem),
                fact("the one-step discrete gap is O(dt^2), hence the sup gap is O(dt)", Derived),
            ],
            exact: None,
            build: separable_sine,
        },
    ]
}

pub fn problem(key: &str) -> Result<NamedProblem> {
    catalog().into_iter().find(|p| p.key == key).ok_or_else(|| Error::UnknownProblem(key.to_string()))
}

/// One row of the traceability matrix: a property, the suite that checks it
/// and the tolerance it is judged at.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub property: &'static str,
    pub statement: &'static str,
    pub suite: &'static str,
    pub tolerance: &'static str,
    pub basis: Basis,
}

pub fn trace_matrix() -> Vec<TraceRow> {
    use Basis::*;
    let row = |property, statement, suite, tolerance, basis| TraceRow { property, statement, suite, tolerance, basis };
    vec![
        row("sublinear-closed-form", "upper functional of a constant is xi+ e^{K delta} - xi- e^{-K delta}", "sublinear", "1e-4 after Richardson", Theorem),
        row("sublinear-k-zero", "K = 0 reduces both functionals to the conditional expectation", "sublinear", "1e-12", Theorem),
        row("sublinear-duality", "upper[xi] = -lower[-xi]", "sublinear", "1e-12", Theorem),
        row("sublinear-homogeneity", "upper[lambda xi] = lambda upper[xi] for lambda >= 0", "sublinear", "1e-12", Theorem),
        row("sublinear-subadditivity", "upper is subadditive and lower superadditive", "sublinear", "1e-10", Theorem),
        row("sublinear-monotone-k", "upper nondecreasing and lower nonincreasing in K", "sublinear", "1e-10", Theorem),
        row("tilt-representation", "tilted expectations with |(h0, h)| <= K lie between lower and upper", "sublinear", "5 dt K |xi|", Theorem),
        row("domination-chain", "lower^L[xi1 - xi2] <= G[xi1] - G[xi2] <= upper^L[xi1 - xi2]", "domination", "1e-9", Theorem),
        row("domination-sqrt-lower", "E sqrt|xi| <= sqrt(lower^K[|xi|] e^{(K+2) K delta})", "domination", "5 dt L max(|xi|, 1)", Theorem),
        row("domination-upper-l2", "upper^K[|xi|] <= sqrt(e^{(K+2) K delta} E|xi|^2)", "domination", "5 dt L max(|xi|, 1)", Theorem),
        row("bsde-comparison", "ordered terminal values and drivers give ordered solutions", "comparison", "1e-10", Theorem),
        row("minimax-inequality", "H- <= H+ at every point", "isaacs", "0", Trivial),
        row("isaacs-gap-enumeration", "isaacs-gap has H- = -1 and H+ = +1 at p = 1", "isaacs", "exact", Derived),
        row("value-existence", "under the Isaacs condition the gap V - U vanishes: gap(2n) <= 0.6 gap(n) + 1e-10", "isaacs", "0.6 ratio", Theorem),
        row("cancel-drift-value", "lower and upper cancel-drift values equal x", "dpp", "1e-10", Derived),
        row("dynamic-programming", "V_j equals the inner game from j to k with terminal V_k", "dpp", "1e-10", Theorem),
        row("lsmc-policy", "Monte Carlo payoff of the greedy profile matches the lattice value", "dpp", "3 bootstrap SE", Derived),
        row("epsilon-optimal", "the greedy profile attains the value", "dpp", "1e-10", Theorem),
        row("no-profitable-deviation", "one-shot deviations never improve either player", "dpp", "1e-10", Derived),
        row("value-bound", "|V| <= L (T + 1)", "regularity", "exact", Theorem),
        row("spatial-regularity", "spatial difference quotients stable under 2x refinement", "regularity", "1.1 q + 0.01", Theorem),
        row("time-continuity", "|V(t_k, x) - V(t_{k+1}, x)| / sqrt(dt) bounded across refinement", "regularity", "reported", Theorem),
        row("stability", "coefficient perturbations of size eps move the value by O(eps)", "stability", "slope >= 0.9", Theorem),
        row("freezing-rate", "freezing the driver's state costs O(delta^{5/4} (1 + |xi|))", "freezing-rate", "slope >= 1.0, growth within 2x", Theorem),
        row("pde-identification", "lattice game value matches the finite-difference Isaacs solution", "pde-cross", "5e-2", Theorem),
        row("pde-convergence", "oracle and lattice discrepancy halves under 2x refinement", "pde-cross", "ratio in [0.35, 0.65]", Derived),
        row("heat-kernel", "heat-check solution is exp(-(T - t)/2) cos x", "pde-cross", "2e-3", Derived),
        row("mollifier-mass", "the bump kernel integrates to 1", "smoothing", "1e-6", Trivial),
        row("barrier-shape", "g(0) = 0, g(x) > |x| - 3, g convex", "smoothing", "1e-9", Theorem),
        row("mollifier-sup", "|phi_delta| <= |phi| in sup norm", "smoothing", "1e-12", Trivial),
    ]
}

pub fn write_trace_csv(out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in trace_matrix() {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
