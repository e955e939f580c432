//! Experiment runner: config parsing, property suites, result bundles and
//! golden-file comparison.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bsde::{compare_bsde, freezing_gap, log_log_slope, LsmcConfig, NodeDriver};
use crate::error::{Error, Result};
use crate::game::{
    deviation_check, dpp_residual, extract_epsilon_optimal, lower_upper_gap, lsmc_policy_check, regularity_suite, solve_value,
    stability_suite, GameTree, Side,
};
use crate::grid::{block_seed, build_lattice, Filtration, TimeGrid};
use crate::hamiltonian::{h_minus, h_plus, isaacs_check, random_points, HamiltonianPoint, TestField, ISAACS_TOL};
use crate::pde_oracle::{compare_game_vs_pde, solve_hjbi_fd, Boundary, PdeGrid};
use crate::problem::{bump, mollify, Barrier, CoeffInput, ControlGrid, ControlLabel, DriverInput, MollifierConfig, ProblemSpec, Randomness};
use crate::problems::{problem, ExactValue};
use crate::sde::{lattice_forward, ControlProcess, StateTree, TreeStart};
use crate::sublinear::{closed_form_measurable, richardson, sublinear_solve, tilt_bound, tilt_tolerance, Direction, SublinearQuery, Tilt};

pub const SCHEMA_VERSION: u32 = 1;

pub const SUITES: [&str; 10] =
    ["dpp", "sublinear", "domination", "comparison", "regularity", "stability", "freezing-rate", "isaacs", "pde-cross", "smoothing"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Lattice,
    /// Adds the Monte Carlo policy cross-check to the `dpp` suite.
    Lsmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsaacsMode {
    #[default]
    Report,
    ExpectGap,
    ExpectHold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub n_steps: usize,
    pub branching: usize,
    /// Initial state; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { n_steps: 6, branching: 2, x0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub bootstrap: usize,
    pub degree: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { n_paths: 20_000, bootstrap: 50, degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    pub n_x: usize,
    pub n_steps: usize,
    pub lo: f64,
    pub hi: f64,
    pub boundary: Boundary,
    /// Assert first-order convergence of the discrepancy under 2x refinement.
    pub expect_halving: bool,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig { n_x: 200, n_steps: 50, lo: -8.0, hi: 8.0, boundary: Boundary::OneSided, expect_halving: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Identity,
    Sin,
    Cos,
    Tanh,
    Clip,
}

/// One-dimensional problem given by coefficients:
/// `b = drift[0] theta + drift[1] gamma + drift[2] theta gamma + drift[3] x`,
/// constant `sigma`, `f = driver[0] y + driver[1] z + driver[2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub horizon: f64,
    pub lipschitz: f64,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub drift: [f64; 4],
    pub sigma: f64,
    pub driver: [f64; 3],
    pub terminal: TerminalKind,
}

impl InlineProblem {
    pub fn spec(&self) -> Result<ProblemSpec> {
        let th = ControlGrid::scalar(&self.theta, ControlLabel::Theta)?;
        let ga = ControlGrid::scalar(&self.gamma, ControlLabel::Gamma)?;
        let (b, s, f, kind) = (self.drift, self.sigma, self.driver, self.terminal);
        Ok(ProblemSpec::new("inline", 1, 1, self.horizon, self.lipschitz, th, ga)?
            .with_drift(move |i: &CoeffInput, o: &mut [f64]| {
                o[0] = b[0] * i.theta[0] + b[1] * i.gamma[0] + b[2] * i.theta[0] * i.gamma[0] + b[3] * i.x[0]
            })
            .with_diffusion(move |_, o| o[0] = s)
            .with_driver(move |i: &DriverInput| f[0] * i.y + f[1] * i.z[0] + f[2])
            .with_terminal(move |x, _| match kind {
                TerminalKind::Identity => x[0],
                TerminalKind::Sin => x[0].sin(),
                TerminalKind::Cos => x[0].cos(),
                TerminalKind::Tanh => x[0].tanh(),
                TerminalKind::Clip => x[0].clamp(-1.0, 1.0),
            })
            .with_descriptor(format!("inline {self:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub problem: Option<String>,
    #[serde(default)]
    pub inline: Option<InlineProblem>,
    pub suites: Vec<String>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub isaacs_mode: IsaacsMode,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_instances() -> usize {
    100
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// A validated experiment ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ProblemSpec,
    pub key: String,
    exact: Option<ExactValue>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema and semantic checks; no compute happens before this passes.
    pub fn validate(self) -> Result<Experiment> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.suites.is_empty() {
            return bad("suites must not be empty".into());
        }
        let mut seen = HashSet::new();
        for s in &self.suites {
            if !SUITES.contains(&s.as_str()) {
                return bad(format!("unknown suite `{s}`"));
            }
            if !seen.insert(s) {
                return bad(format!("suite `{s}` listed twice"));
            }
        }
        let (spec, key, exact) = match (&self.problem, &self.inline) {
            (Some(k), None) => {
                let p = problem(k).map_err(|e| Error::Config(e.to_string()))?;
                (p.spec(), p.key.to_string(), p.exact)
            }
            (None, Some(inline)) => (inline.spec().map_err(|e| Error::Config(e.to_string()))?, "inline".to_string(), None),
            _ => return bad("give exactly one of `problem` and `inline`".into()),
        };
        let l = &self.lattice;
        if l.n_steps == 0 || !(2..=3).contains(&l.branching) {
            return bad("lattice needs n_steps >= 1 and branching 2 or 3".into());
        }
        if let Some(x0) = &l.x0 {
            if x0.len() != spec.d() || x0.iter().any(|v| !v.is_finite()) {
                return bad(format!("x0 must hold {} finite values", spec.d()));
            }
        }
        if self.instances == 0 {
            return bad("instances must be >= 1".into());
        }
        let p = &self.pde;
        if p.n_x < 5 || p.n_steps == 0 || !(p.lo < p.hi) {
            return bad("pde needs n_x >= 5, n_steps >= 1 and lo < hi".into());
        }
        if self.monte_carlo.n_paths < 100 || self.monte_carlo.degree == 0 {
            return bad("monte_carlo needs n_paths >= 100 and degree >= 1".into());
        }
        Ok(Experiment { config: self, spec, key, exact })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Check {
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    Between { lo: f64, hi: f64 },
    Report,
}

impl Check {
    fn judge(&self, v: f64) -> bool {
        match *self {
            Check::AtMost { bound } => v <= bound,
            Check::AtLeast { bound } => v >= bound,
            Check::Between { lo, hi } => lo <= v && v <= hi,
            Check::Report => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub suite: String,
    pub name: String,
    /// `None` when the computed value was not finite.
    pub value: Option<f64>,
    pub check: Check,
    pub pass: bool,
    /// Standard error for Monte Carlo scalars.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub suite: String,
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub version: String,
    pub problem: String,
    pub spec_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    /// Extra provenance keyed by suite, e.g. tree hashes.
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub metadata: Metadata,
    pub scalars: Vec<Scalar>,
    pub tables: Vec<Table>,
}

impl ResultBundle {
    pub fn passed(&self) -> bool {
        self.scalars.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> Vec<&Scalar> {
        self.scalars.iter().filter(|s| !s.pass).collect()
    }

    pub fn scalar(&self, suite: &str, name: &str) -> Option<&Scalar> {
        self.scalars.iter().find(|s| s.suite == suite && s.name == name)
    }

    /// Writes `results.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.json"), serde_json::to_string_pretty(self)?)?;
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}-{}.csv", t.suite, t.name)))?;
            w.write_record(&t.columns)?;
            for r in &t.rows {
                w.write_record(r.iter().map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("results.json"))?)?)
    }
}

struct Recorder<'a> {
    suite: &'a str,
    scalars: Vec<Scalar>,
    tables: Vec<Table>,
}

impl<'a> Recorder<'a> {
    fn new(suite: &'a str) -> Self {
        Recorder { suite, scalars: Vec::new(), tables: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, value: f64, check: Check) {
        self.push_se(name, value, check, None)
    }

    fn push_se(&mut self, name: impl Into<String>, value: f64, check: Check, se: Option<f64>) {
        let finite = value.is_finite();
        self.scalars.push(Scalar {
            suite: self.suite.to_string(),
            name: name.into(),
            value: finite.then_some(value),
            pass: finite && check.judge(value),
            check,
            se,
        });
    }

    fn table(&mut self, name: &str, columns: &[&str], rows: Vec<Vec<f64>>) {
        self.tables.push(Table {
            suite: self.suite.to_string(),
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
    }
}

fn at_most(bound: f64) -> Check {
    Check::AtMost { bound }
}

fn at_least(bound: f64) -> Check {
    Check::AtLeast { bound }
}

/// Thread count from `SDG_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("SDG_THREADS").ok()?.parse().ok().filter(|&n| n > 0)
}

impl Experiment {
    fn x0(&self) -> Vec<f64> {
        self.config.lattice.x0.clone().unwrap_or_else(|| vec![0.0; self.spec.d()])
    }

    fn grid(&self, n: usize) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.spec.horizon(), n)
    }

    fn markovian(&self) -> bool {
        matches!(self.spec.randomness(), Randomness::Markovian)
    }

    /// Runs every requested suite in order.
    pub fn run(&self) -> Result<ResultBundle> {
        let clock = Instant::now();
        let mut scalars = Vec::new();
        let mut tables = Vec::new();
        let mut provenance = BTreeMap::new();
        for suite in &self.config.suites {
            let mut rec = Recorder::new(suite);
            match suite.as_str() {
                "dpp" => {
                    let hash = self.dpp(&mut rec)?;
                    provenance.insert("dpp.tree".to_string(), hash);
                }
                "sublinear" => self.sublinear(&mut rec)?,
                "domination" => self.domination(&mut rec)?,
                "comparison" => self.comparison(&mut rec)?,
                "regularity" => self.regularity(&mut rec)?,
                "stability" => self.stability(&mut rec)?,
                "freezing-rate" => self.freezing(&mut rec)?,
                "isaacs" => self.isaacs(&mut rec)?,
                "pde-cross" => self.pde_cross(&mut rec)?,
                "smoothing" => self.smoothing(&mut rec)?,
                other => return Err(Error::Config(format!("unknown suite `{other}`"))),
            }
            scalars.extend(rec.scalars);
            tables.extend(rec.tables);
        }
        Ok(ResultBundle {
            metadata: Metadata {
                schema_version: SCHEMA_VERSION,
                version: env!("CARGO_PKG_VERSION").to_string(),
                problem: self.key.clone(),
                spec_hash: self.spec.spec_hash(),
                seed: self.config.seed,
                threads: rayon::current_num_threads(),
                wall_time_s: clock.elapsed().as_secs_f64(),
                provenance,
            },
            scalars,
            tables,
        })
    }

    fn dpp(&self, rec: &mut Recorder) -> Result<String> {
        let spec = &self.spec;
        let cfg = &self.config.lattice;
        let n = cfg.n_steps;
        let tree = GameTree::build(spec, self.grid(n)?, cfg.branching, 0, &self.x0())?;
        let lower = solve_value(spec, &tree, Side::Lower)?;
        let upper = solve_value(spec, &tree, Side::Upper)?;
        rec.push("lower_value", lower.root(), Check::Report);
        rec.push("upper_value", upper.root(), Check::Report);
        let (gap, inverted) = lower_upper_gap(&lower, &upper)?;
        rec.push("lower_upper_gap", gap, Check::Report);
        rec.push("lower_above_upper_nodes", inverted as f64, at_most(0.0));

        // Longest inner game whose extensive form stays small.
        let (nt, ng) = tree.pairs();
        let per_step = (nt * ng * tree.outcomes().len()) as f64;
        let mut span = 1;
        while span < crate::game::DPP_MAX_SPAN && span < n && per_step.powi(span as i32 + 1) <= 2e6 {
            span += 1;
        }
        rec.push("dpp_span", span as f64, Check::Report);
        for (side, field) in [("lower", &lower), ("upper", &upper)] {
            let mut worst: f64 = 0.0;
            for (j, k) in [(0, 1), (0, span), (n - span, n)] {
                worst = worst.max(dpp_residual(spec, &tree, field, j, k, 8)?.max_residual);
            }
            rec.push(format!("dpp_residual_{side}"), worst, at_most(1e-10));
            if let Some(exact) = self.exact {
                let grid = tree.time_grid();
                let mut err: f64 = 0.0;
                for k in 0..=n {
                    for i in 0..tree.slice_len(k) {
                        err = err.max((field.at(k, i) - exact(grid.time(k), tree.state(k, i))).abs());
                    }
                }
                rec.push(format!("exact_error_{side}"), err, at_most(1e-10));
            }
            if self.markovian() {
                let profile = extract_epsilon_optimal(spec, &tree, field, cfg.branching)?;
                rec.push(format!("epsilon_{side}"), profile.epsilon, at_most(1e-10));
                let dev = deviation_check(spec, &tree, field, 100, self.config.seed)?;
                rec.push(format!("maximizer_gain_{side}"), dev.maximizer_gain, at_most(1e-10));
                rec.push(format!("minimizer_gain_{side}"), dev.minimizer_gain, at_most(1e-10));
            }
        }
        if self.config.solver == Solver::Lsmc && self.markovian() {
            let mc = &self.config.monte_carlo;
            let lsmc = LsmcConfig { degree: mc.degree, bootstrap: mc.bootstrap, seed: self.config.seed };
            let r = lsmc_policy_check(spec, &tree, &lower, mc.n_paths, lsmc)?;
            rec.push_se("policy_mc_value", r.mc_value, Check::Report, Some(r.se));
            rec.push("policy_mc_z", r.z_score(), at_most(3.0));
        }
        Ok(tree.hash().to_string())
    }

    fn sublinear(&self, rec: &mut Recorder) -> Result<()> {
        let k = 0.5;
        let mut rows = Vec::new();
        let mut vals = [[0.0; 3]; 2];
        for (c, n) in [25, 50, 100].into_iter().enumerate() {
            let lat = build_lattice(TimeGrid::new(0.0, 1.0, n)?, 1, 2)?;
            let leaves = lat.slice_len(n);
            for (r, dir) in [Direction::Upper, Direction::Lower].into_iter().enumerate() {
                let q = SublinearQuery { k, start: 0, end: n, xi: vec![1.0; leaves], direction: dir };
                vals[r][c] = sublinear_solve(&q, &lat)?.root();
            }
            rows.push(vec![n as f64, vals[0][c], vals[1][c]]);
        }
        rec.table("closed-form", &["n_steps", "upper", "lower"], rows);
        for (r, dir, name) in [(0, Direction::Upper, "upper"), (1, Direction::Lower, "lower")] {
            let target = closed_form_measurable(1.0, k, 1.0, dir);
            let ext = richardson(vals[r][0], vals[r][1], vals[r][2]);
            rec.push(format!("richardson_{name}"), ext, Check::Report);
            rec.push(format!("richardson_error_{name}"), (ext - target).abs(), at_most(1e-4));
        }

        // Randomized identities on a small lattice.
        let n = 6;
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n)?, 1, 2)?;
        let leaves = lat.slice_len(n);
        let probs: Vec<f64> = lat.slice(n).iter().map(|v| v.prob).collect();
        let solve = |kk: f64, xi: &[f64], dir| -> Result<Vec<Vec<f64>>> {
            let s = sublinear_solve(&SublinearQuery { k: kk, start: 0, end: n, xi: xi.to_vec(), direction: dir }, &lat)?;
            Ok((0..=n).map(|j| s.y_at(j).to_vec()).collect())
        };
        let max_diff = |a: &[Vec<f64>], b: &[Vec<f64>], f: &dyn Fn(f64, f64) -> f64| -> f64 {
            a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| f(*x, *y)).fold(f64::NEG_INFINITY, f64::max)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let (mut k_zero, mut duality, mut homog) = (0.0f64, 0.0f64, 0.0f64);
        let (mut sub_viol, mut mono_viol, mut tilt_viol) = (0usize, 0usize, 0usize);
        let mut tilt_excess = f64::NEG_INFINITY;
        for inst in 0..self.config.instances {
            let kk = [0.5, 1.0, 2.0][inst % 3];
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..leaves).map(|_| rng.random_range(-2.0..2.0)).collect() };
            let (x1, x2) = (draw(&mut rng), draw(&mut rng));
            let mean: f64 = probs.iter().zip(&x1).map(|(p, v)| p * v).sum();
            for dir in [Direction::Upper, Direction::Lower] {
                k_zero = k_zero.max((solve(0.0, &x1, dir)?[0][0] - mean).abs());
            }
            let up = solve(kk, &x1, Direction::Upper)?;
            let lo = solve(kk, &x1, Direction::Lower)?;
            let neg: Vec<f64> = x1.iter().map(|v| -v).collect();
            duality = duality.max(max_diff(&up, &solve(kk, &neg, Direction::Lower)?, &|a, b| (a + b).abs()));
            for lam in [0.0, 0.5, 2.0] {
                let scaled: Vec<f64> = x1.iter().map(|v| lam * v).collect();
                homog = homog.max(max_diff(&solve(kk, &scaled, Direction::Upper)?, &up, &|a, b| (a - lam * b).abs()));
            }
            let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
            let (up2, lo2) = (solve(kk, &x2, Direction::Upper)?, solve(kk, &x2, Direction::Lower)?);
            let (up_s, lo_s) = (solve(kk, &sum, Direction::Upper)?, solve(kk, &sum, Direction::Lower)?);
            for (j, row) in up_s.iter().enumerate() {
                for i in 0..row.len() {
                    sub_viol += (up_s[j][i] > up[j][i] + up2[j][i] + 1e-10) as usize;
                    sub_viol += (lo[j][i] + lo2[j][i] > lo_s[j][i] + 1e-10) as usize;
                }
            }
            let (up_big, lo_big) = (solve(2.0 * kk, &x1, Direction::Upper)?, solve(2.0 * kk, &x1, Direction::Lower)?);
            mono_viol += up.iter().flatten().zip(up_big.iter().flatten()).filter(|(a, b)| **a > **b + 1e-10).count();
            mono_viol += lo_big.iter().flatten().zip(lo.iter().flatten()).filter(|(a, b)| **a > **b + 1e-10).count();
            let q = SublinearQuery { k: kk, start: 0, end: n, xi: x1.clone(), direction: Direction::Upper };
            let tilted = tilt_bound(&q, &Tilt::random(&lat, 0, n, kk, block_seed(self.config.seed, inst as u64)), &lat)?[0];
            let tol = tilt_tolerance(lat.time_grid().dt(), kk, &x1);
            tilt_excess = tilt_excess.max((tilted - up[0][0]).max(lo[0][0] - tilted));
            tilt_viol += (tilted > up[0][0] + tol || tilted < lo[0][0] - tol) as usize;
        }
        rec.push("k_zero_error", k_zero, at_most(1e-12));
        rec.push("duality_error", duality, at_most(1e-12));
        rec.push("homogeneity_error", homog, at_most(1e-12));
        rec.push("subadditivity_violations", sub_viol as f64, at_most(0.0));
        rec.push("monotone_k_violations", mono_viol as f64, at_most(0.0));
        rec.push("tilt_violations", tilt_viol as f64, at_most(0.0));
        rec.push("tilt_max_excess", tilt_excess, Check::Report);
        Ok(())
    }

    /// Three-step state tree under random constant controls, with a step small
    /// enough for the discrete comparison principle.
    fn small_tree(&self, rng: &mut ChaCha8Rng) -> Result<StateTree> {
        let spec = &self.spec;
        let l = spec.lipschitz().max(1e-12);
        let dt = (spec.horizon() / 3.0).min(0.9 / l).min(0.9 / (l * l * spec.m() as f64));
        let lat = build_lattice(TimeGrid::new(0.0, 3.0 * dt, 3)?, spec.m(), self.config.lattice.branching)?;
        let ctl = ControlProcess::constant(rng.random_range(0..spec.theta_grid().len()), rng.random_range(0..spec.gamma_grid().len()));
        lattice_forward(spec, &lat, &TreeStart::at(spec, 0, self.x0()), &ctl)
    }

    fn domination(&self, rec: &mut Recorder) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let (mut chain, mut sqrt_lower, mut upper_l2) = (0usize, 0usize, 0usize);
        let (mut chain_margin, mut sqrt_margin, mut l2_margin) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for _ in 0..self.config.instances {
            let tree = self.small_tree(&mut rng)?;
            let n = tree.leaf_count();
            let xi1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let xi2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = crate::sublinear::domination_suite(&self.spec, &tree, &xi1, &xi2, self.spec.lipschitz())?;
            chain += !r.chain as usize;
            sqrt_lower += !r.sqrt_lower as usize;
            upper_l2 += !r.upper_l2 as usize;
            chain_margin = chain_margin.min(r.chain_margin);
            sqrt_margin = sqrt_margin.min(r.sqrt_lower_margin);
            l2_margin = l2_margin.min(r.upper_l2_margin);
        }
        rec.push("chain_violations", chain as f64, at_most(0.0));
        rec.push("chain_min_margin", chain_margin, Check::Report);
        rec.push("sqrt_lower_violations", sqrt_lower as f64, Check::Report);
        rec.push("sqrt_lower_min_margin", sqrt_margin, Check::Report);
        rec.push("upper_l2_violations", upper_l2 as f64, Check::Report);
        rec.push("upper_l2_min_margin", l2_margin, Check::Report);
        Ok(())
    }

    fn comparison(&self, rec: &mut Recorder) -> Result<()> {
        let spec = &self.spec;
        let f = spec.driver_fn();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut violations = 0usize;
        let mut excess = f64::NEG_INFINITY;
        for _ in 0..self.config.instances {
            let tree = self.small_tree(&mut rng)?;
            let n = tree.leaf_count();
            let xi1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let xi2: Vec<f64> = xi1.iter().map(|v| v + rng.random_range(0.0..0.5)).collect();
            let (c1, c2) = {
                let c = rng.random_range(-1.0..1.0);
                (c, c + rng.random_range(0.0..0.5))
            };
            let grid = *tree.time_grid();
            let driver = |shift: f64| {
                let (tree, f) = (&tree, &f);
                move |k: usize, i: usize, y: f64, z: &[f64]| -> f64 {
                    let (th, ga) = tree.control(k, i);
                    f(&DriverInput {
                        t: grid.time(k),
                        x: tree.state(k, i),
                        y,
                        z,
                        theta: spec.theta_grid().point(th),
                        gamma: spec.gamma_grid().point(ga),
                        hist: tree.history(k, i),
                    }) + shift
                }
            };
            let (g1, g2) = (driver(c1), driver(c2));
            let r = compare_bsde(&tree, &xi1, &xi2, &g1 as &NodeDriver, &g2 as &NodeDriver)?;
            violations += r.violations;
            excess = excess.max(r.max_excess);
        }
        rec.push("violations", violations as f64, at_most(0.0));
        rec.push("max_excess", excess, Check::Report);
        Ok(())
    }

    fn probes(&self) -> Vec<Vec<f64>> {
        let x0 = self.x0();
        (0..5)
            .map(|i| {
                let mut x = x0.clone();
                x[0] += -0.5 + 0.25 * i as f64;
                x
            })
            .collect()
    }

    fn regularity(&self, rec: &mut Recorder) -> Result<()> {
        let cfg = &self.config.lattice;
        let probes = self.probes();
        let coarse = regularity_suite(&self.spec, cfg.n_steps, cfg.branching, &probes, Side::Lower)?;
        let fine = regularity_suite(&self.spec, 2 * cfg.n_steps, cfg.branching, &probes, Side::Lower)?;
        rec.push("bound", coarse.bound, Check::Report);
        for (tag, r) in [("n", &coarse), ("2n", &fine)] {
            rec.push(format!("sup_abs_{tag}"), r.sup_abs, at_most(r.bound));
            rec.push(format!("lipschitz_{tag}"), r.lipschitz, Check::Report);
            rec.push(format!("time_modulus_{tag}"), r.time_modulus, Check::Report);
        }
        rec.push("lipschitz_growth_excess", fine.lipschitz - (1.1 * coarse.lipschitz + 0.01), at_most(0.0));
        rec.push("lipschitz_shrink_excess", coarse.lipschitz - (1.1 * fine.lipschitz + 0.01), at_most(0.0));
        rec.push("time_modulus_growth_excess", fine.time_modulus - (1.1 * coarse.time_modulus + 0.01), Check::Report);
        Ok(())
    }

    fn stability(&self, rec: &mut Recorder) -> Result<()> {
        let cfg = &self.config.lattice;
        let eps = [0.2, 0.1, 0.05];
        let pts = stability_suite(
            &self.spec,
            Arc::new(|_: &CoeffInput, o: &mut [f64]| o.fill(1.0)),
            Arc::new(|i: &DriverInput| 0.5 * i.y.tanh() + 0.2),
            &eps,
            cfg.n_steps,
            cfg.branching,
            &self.probes(),
            Side::Lower,
        )?;
        let drift: Vec<f64> = pts.iter().map(|p| p.drift).collect();
        rec.table("drift", &["eps", "drift"], pts.iter().map(|p| vec![p.eps, p.drift]).collect());
        rec.push("slope", log_log_slope(&eps, &drift), at_least(0.9));
        rec.push("max_drift_over_eps", pts.iter().map(|p| p.drift / p.eps).fold(0.0, f64::max), Check::Report);
        Ok(())
    }

    fn freezing(&self, rec: &mut Recorder) -> Result<()> {
        let spec = &self.spec;
        let deltas = [0.2, 0.1, 0.05, 0.025];
        let field = TestField::sine(spec.d(), spec.m(), 1.0);
        let mut gaps = Vec::new();
        let mut rows = Vec::new();
        for xi in [0.0, 5.0, 10.0] {
            let pts = freezing_gap(spec, &field, &vec![xi; spec.d()], 0.0, &deltas, 12, (0, 0))?;
            let g: Vec<f64> = pts.iter().map(|p| p.gap).collect();
            rec.push(format!("slope_xi{xi}"), log_log_slope(&deltas, &g), at_least(1.0));
            rows.extend(pts.iter().map(|p| vec![xi, p.delta, p.gap]));
            gaps.push((xi, g));
        }
        let base = &gaps[0].1;
        let mut ratio: f64 = 0.0;
        for (xi, g) in &gaps[1..] {
            let growth = 1.0 + xi * (spec.d() as f64).sqrt();
            for (a, b) in g.iter().zip(base) {
                ratio = ratio.max(a / (growth * b));
            }
        }
        rec.push("growth_ratio", ratio, at_most(2.0));
        rec.table("gaps", &["xi", "delta", "gap"], rows);
        Ok(())
    }

    fn isaacs(&self, rec: &mut Recorder) -> Result<()> {
        let spec = &self.spec;
        let (th, ga) = (spec.theta_grid(), spec.gamma_grid());
        let sample = random_points(spec, 1000, 2.0, self.config.seed);
        let mut minimax = 0usize;
        for pt in &sample {
            minimax += (h_minus(pt, spec, th, ga).value > h_plus(pt, spec, th, ga).value) as usize;
        }
        rec.push("minimax_violations", minimax as f64, at_most(0.0));
        let report = isaacs_check(spec, &sample, ISAACS_TOL);
        let mut p = vec![0.0; spec.d()];
        p[0] = 1.0;
        let canonical = HamiltonianPoint::first_order(0.0, self.x0(), p, 0.0, vec![0.0; spec.m()]);
        let (hm, hp) = (h_minus(&canonical, spec, th, ga).value, h_plus(&canonical, spec, th, ga).value);
        rec.push("h_minus_unit_p", hm, Check::Report);
        rec.push("h_plus_unit_p", hp, Check::Report);
        let mode = self.config.isaacs_mode;
        let gap_check = match mode {
            IsaacsMode::ExpectGap => at_least(10.0 * ISAACS_TOL),
            IsaacsMode::ExpectHold => at_most(ISAACS_TOL),
            IsaacsMode::Report => Check::Report,
        };
        rec.push("gap_unit_p", hp - hm, gap_check.clone());
        rec.push("max_sample_gap", report.max_gap, gap_check);
        if mode == IsaacsMode::ExpectHold {
            let cfg = &self.config.lattice;
            let mut rows = Vec::new();
            for n in [cfg.n_steps, 2 * cfg.n_steps, 4 * cfg.n_steps] {
                let tree = GameTree::build(spec, self.grid(n)?, cfg.branching, 0, &self.x0())?;
                let (gap, _) = lower_upper_gap(&solve_value(spec, &tree, Side::Lower)?, &solve_value(spec, &tree, Side::Upper)?)?;
                rows.push(vec![n as f64, gap]);
            }
            for w in rows.windows(2) {
                rec.push(format!("value_gap_shrink_{}", w[1][0]), w[1][1] - (0.6 * w[0][1] + 1e-10), at_most(0.0));
            }
            rec.table("value-gap", &["n_steps", "gap"], rows);
        }
        Ok(())
    }

    fn pde_cross(&self, rec: &mut Recorder) -> Result<()> {
        let spec = &self.spec;
        if !self.markovian() || spec.d() > 2 {
            return Err(Error::Config("pde-cross needs a Markovian problem with d <= 2".into()));
        }
        let cfg = &self.config.pde;
        let mut disc = Vec::new();
        let mut rows = Vec::new();
        for refine in [1, 2] {
            let n = cfg.n_steps * refine;
            let n_x = (cfg.n_x - 1) * refine + 1;
            let tree = GameTree::build(spec, self.grid(n)?, self.config.lattice.branching, 0, &self.x0())?;
            let grid = PdeGrid::cube(cfg.lo, cfg.hi, spec.d(), n_x, cfg.boundary);
            let mut worst: f64 = 0.0;
            let mut probes = 0;
            for side in [Side::Lower, Side::Upper] {
                let pde = solve_hjbi_fd(spec, &grid, side)?;
                let c = compare_game_vs_pde(&tree, &solve_value(spec, &tree, side)?, &pde);
                worst = worst.max(c.discrepancy);
                probes = c.probes;
                if let (Some(exact), Side::Lower) = (self.exact, side) {
                    let mut err: f64 = 0.0;
                    for (k, &t) in pde.times.iter().enumerate() {
                        for flat in 0..grid.node_count() {
                            let x = grid.point(flat);
                            let inside = x.iter().all(|v| *v >= cfg.lo + 2.0 * grid.dx(0) && *v <= cfg.hi - 2.0 * grid.dx(0));
                            if inside {
                                err = err.max((pde.u[k][flat] - exact(t, &x)).abs());
                            }
                        }
                    }
                    rec.push(format!("oracle_exact_error_{refine}x"), err, if refine == 1 { at_most(2e-3) } else { Check::Report });
                }
            }
            rec.push(format!("discrepancy_{refine}x"), worst, if refine == 1 { at_most(5e-2) } else { Check::Report });
            rows.push(vec![n as f64, n_x as f64, worst, probes as f64]);
            disc.push(worst);
        }
        if disc[0] > 1e-8 {
            let check = if cfg.expect_halving { Check::Between { lo: 0.35, hi: 0.65 } } else { Check::Report };
            rec.push("halving_ratio", disc[1] / disc[0], check);
        } else {
            // Both discretizations already agree to rounding.
            rec.push("refined_discrepancy", disc[1], at_most(1e-8));
        }
        rec.table("refinement", &["n_steps", "n_x", "discrepancy", "probes"], rows);
        Ok(())
    }

    fn smoothing(&self, rec: &mut Recorder) -> Result<()> {
        for d in [1, 2] {
            rec.push(format!("bump_mass_error_d{d}"), (crate::problem::smoothing::bump_mass(d) - 1.0).abs(), at_most(1e-6));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let (g1, g2) = (Barrier::with_default_rule(1), Barrier::with_default_rule(2));
        rec.push("barrier_at_zero", g1.eval(&[0.0]).value.abs().max(g2.eval(&[0.0, 0.0]).value.abs()), at_most(0.0));
        let mut below = 0usize;
        let mut convexity = 0usize;
        for i in 0..200 {
            let r = -10.0 + 20.0 * i as f64 / 199.0;
            below += (g1.eval(&[r]).value <= r.abs() - 3.0) as usize;
            let x: [f64; 2] = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
            let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
            below += (g2.eval(&x).value <= norm - 3.0) as usize;
            let (a, b) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let mid = g1.eval(&[0.5 * (a + b)]).value;
            convexity += (mid > 0.5 * (g1.eval(&[a]).value + g1.eval(&[b]).value) + 1e-9) as usize;
        }
        rec.push("barrier_below_violations", below as f64, at_most(0.0));
        rec.push("convexity_violations", convexity as f64, at_most(0.0));
        let mut sup_excess = f64::NEG_INFINITY;
        for _ in 0..50 {
            let knots: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sup = knots.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let pl = |x: &[f64]| {
                let t = (x[0] + 4.0).clamp(0.0, 8.0);
                let i = (t.floor() as usize).min(7);
                knots[i] + (t - i as f64) * (knots[i + 1] - knots[i])
            };
            let m = mollify(pl, 1, MollifierConfig { delta: rng.random_range(0.05..1.0), points_per_axis: 32 });
            for i in 0..100 {
                sup_excess = sup_excess.max(m.eval(&[-5.0 + 10.0 * i as f64 / 99.0]).abs() - sup);
            }
        }
        rec.push("mollifier_sup_excess", sup_excess, at_most(1e-12));
        rec.push("bump_at_origin", bump(&[0.0]), Check::Report);
        Ok(())
    }
}

/// Exit code of a run: 0 pass, 1 assertion failure, 2 config error, 3 budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    AssertionFailure = 1,
    SchemaError = 2,
    BudgetError = 3,
}

/// Machine-readable outcome of `run_config`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub status: i32,
    pub kind: &'static str,
    pub message: String,
    pub failures: Vec<String>,
}

/// Loads, validates and runs a config file, writing results to
/// `output` (or the config's `output_dir`, relative to the config file).
pub fn run_config(path: &Path, output: Option<&Path>) -> (ExitStatus, RunReport) {
    let fail = |status: ExitStatus, kind, e: &dyn std::fmt::Display| {
        (status, RunReport { status: status as i32, kind, message: e.to_string(), failures: vec![] })
    };
    let exp = match ExperimentConfig::load(path).and_then(ExperimentConfig::validate) {
        Ok(e) => e,
        Err(e) => return fail(ExitStatus::SchemaError, "schema", &e),
    };
    let out = match output {
        Some(o) => o.to_path_buf(),
        None => path.parent().unwrap_or(Path::new(".")).join(&exp.config.output_dir),
    };
    let bundle = match exp.run() {
        Ok(b) => b,
        Err(e @ Error::Budget { .. }) => return fail(ExitStatus::BudgetError, "budget", &e),
        Err(e @ (Error::Config(_) | Error::StepTooLarge { .. } | Error::InvalidInput(_))) => {
            return fail(ExitStatus::SchemaError, "schema", &e)
        }
        Err(e) => return fail(ExitStatus::AssertionFailure, "compute", &e),
    };
    if let Err(e) = bundle.write(&out) {
        return fail(ExitStatus::AssertionFailure, "io", &e);
    }
    let failures: Vec<String> = bundle.failures().iter().map(|s| format!("{}.{} = {:?} ({:?})", s.suite, s.name, s.value, s.check)).collect();
    let status = if failures.is_empty() { ExitStatus::Pass } else { ExitStatus::AssertionFailure };
    let kind = if failures.is_empty() { "pass" } else { "assertion" };
    (status, RunReport { status: status as i32, kind, message: out.display().to_string(), failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenScalar {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenManifest {
    pub schema_version: u32,
    pub version: String,
    pub problem: String,
    pub scalars: Vec<GoldenScalar>,
}

/// Tolerance for scalars without a standard error.
pub const EXACT_TOLERANCE: f64 = 1e-10;

/// Standard errors allowed between two Monte Carlo runs.
pub const SE_BAND: f64 = 5.0;

impl GoldenManifest {
    pub fn freeze(bundle: &ResultBundle) -> Self {
        GoldenManifest {
            schema_version: bundle.metadata.schema_version,
            version: bundle.metadata.version.clone(),
            problem: bundle.metadata.problem.clone(),
            scalars: bundle
                .scalars
                .iter()
                .filter_map(|s| {
                    let value = s.value?;
                    // Statistics of a Monte Carlo run move with the seed: z-scores are
                    // not frozen, values carry an SE band.
                    if s.name.ends_with("_z") {
                        return None;
                    }
                    let tolerance = s.se.map_or(EXACT_TOLERANCE, |se| SE_BAND * se);
                    Some(GoldenScalar { suite: s.suite.clone(), name: s.name.clone(), value, tolerance })
                })
                .collect(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join("golden.json"))?)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("golden.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenDiff {
    pub suite: String,
    pub name: String,
    pub expected: f64,
    /// `None` when the scalar is missing or not finite.
    pub actual: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenReport {
    pub checked: usize,
    pub diffs: Vec<GoldenDiff>,
}

impl GoldenReport {
    pub fn pass(&self) -> bool {
        self.diffs.is_empty()
    }
}

pub fn golden_compare(bundle: &ResultBundle, golden: &GoldenManifest) -> Result<GoldenReport> {
    if bundle.metadata.version != golden.version || bundle.metadata.schema_version != golden.schema_version {
        return Err(Error::Config(format!(
            "version mismatch: results {}/{} vs golden {}/{}",
            bundle.metadata.version, bundle.metadata.schema_version, golden.version, golden.schema_version
        )));
    }
    let mut diffs = Vec::new();
    for g in &golden.scalars {
        let actual = bundle.scalar(&g.suite, &g.name).and_then(|s| s.value);
        let ok = actual.is_some_and(|a| (a - g.value).abs() <= g.tolerance);
        if !ok {
            diffs.push(GoldenDiff { suite: g.suite.clone(), name: g.name.clone(), expected: g.value, actual, tolerance: g.tolerance });
        }
    }
    Ok(GoldenReport { checked: golden.scalars.len(), diffs })
}

/// Compares `results/results.json` with `golden/golden.json`.
pub fn golden_check(results: &Path, golden: &Path) -> Result<GoldenReport> {
    golden_compare(&ResultBundle::read(results)?, &GoldenManifest::read(golden)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(suites: &[&str]) -> String {
        format!(r#"{{"schema_version": 1, "problem": "cancel-drift", "suites": {:?}, "lattice": {{"n_steps": 4}}, "instances": 5}}"#, suites)
    }

    #[test]
    fn rejects_unknown_keys_and_suites() {
        let text = r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["dpp"], "bogus": 1}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))));
        let c = ExperimentConfig::from_json(&config(&["nope"])).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_json(&config(&["dpp", "dpp"])).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_both_or_neither_problem() {
        let text = r#"{"schema_version": 1, "suites": ["dpp"]}"#;
        assert!(ExperimentConfig::from_json(text).unwrap().validate().is_err());
        let text = r#"{"schema_version": 2, "problem": "cancel-drift", "suites": ["dpp"]}"#;
        assert!(ExperimentConfig::from_json(text).unwrap().validate().is_err());
    }

    #[test]
    fn dpp_on_cancel_drift_passes() {
        let b = ExperimentConfig::from_json(&config(&["dpp"])).unwrap().validate().unwrap().run().unwrap();
        assert!(b.passed(), "{:?}", b.failures());
        assert!(b.scalar("dpp", "dpp_residual_lower").unwrap().value.unwrap() <= 1e-10);
        assert!((b.scalar("dpp", "lower_value").unwrap().value.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn inline_problem_runs() {
        let text = r#"{"schema_version": 1, "suites": ["comparison"], "instances": 3,
            "inline": {"horizon": 1.0, "lipschitz": 1.5, "theta": [-1, 1], "gamma": [0],
                       "drift": [0.5, 0, 0, 0], "sigma": 1.0, "driver": [0.2, 0.1, 0], "terminal": "tanh"}}"#;
        let b = ExperimentConfig::from_json(text).unwrap().validate().unwrap().run().unwrap();
        assert!(b.passed(), "{:?}", b.failures());
    }

    #[test]
    fn golden_roundtrip_and_perturbation() {
        let b = ExperimentConfig::from_json(&config(&["dpp"])).unwrap().validate().unwrap().run().unwrap();
        let g = GoldenManifest::freeze(&b);
        assert!(golden_compare(&b, &g).unwrap().pass());
        let mut moved = b.clone();
        let s = moved.scalars.iter_mut().find(|s| s.name == "lower_value").unwrap();
        s.value = Some(s.value.unwrap() + 1e-6);
        let rep = golden_compare(&moved, &g).unwrap();
        assert_eq!(rep.diffs.len(), 1);
        moved.scalars.retain(|s| s.name != "upper_value");
        let rep = golden_compare(&moved, &g).unwrap();
        assert!(rep.diffs.iter().any(|d| d.name == "upper_value" && d.actual.is_none()));
    }

    #[test]
    fn run_config_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, "{ not json").unwrap();
        let out = dir.path().join("out");
        let (status, _) = run_config(&bad, Some(&out));
        assert_eq!(status, ExitStatus::SchemaError);
        assert!(!out.exists());

        let big = dir.path().join("big.json");
        fs::write(&big, r#"{"schema_version": 1, "suites": ["dpp"], "lattice": {"n_steps": 40},
            "inline": {"horizon": 1.0, "lipschitz": 2.0, "theta": [-1, 1], "gamma": [0],
                       "drift": [1, 0, 0, 0.5], "sigma": 1.0, "driver": [0, 0, 0], "terminal": "clip"}}"#).unwrap();
        assert_eq!(run_config(&big, Some(&out)).0, ExitStatus::BudgetError);

        let good = dir.path().join("good.json");
        fs::write(&good, config(&["dpp"])).unwrap();
        let (status, report) = run_config(&good, Some(&out));
        assert_eq!(status, ExitStatus::Pass, "{report:?}");
        assert!(out.join("results.json").exists());
    }
}
