//! Time grids, recombining noise lattices and Monte Carlo path ensembles.
//!
//! These three structures stand in for the filtered probability space. A
//! quantity is *adapted* when it is indexed by a lattice node (or tree node)
//! at its own slice, or, on a path ensemble, when it is computed from the
//! increments `dW[., 0..k]` only.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Uniform time grid `t_k = t0 + k*dt`, with the final point pinned to the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        if !(t0 >= 0.0 && horizon > t0 && horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "time grid needs 0 <= t0 < T, got t0={t0}, T={horizon}"
            )));
        }
        Ok(TimeGrid { t0, horizon, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    /// Grid point `t_k`; `t_{n_steps}` is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        assert!(k <= self.n_steps, "slice {k} beyond grid of {} steps", self.n_steps);
        if k == self.n_steps {
            self.horizon
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point equal to `t` (up to 1e-9 relative to dt).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 || (x - k).abs() > 1e-9 {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// One joint increment of the `m` Wiener coordinates over a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dw: Vec<f64>,
    pub prob: f64,
    /// Per-coordinate index into the scalar scheme values.
    pub code: Vec<usize>,
}

/// Scalar one-step scheme, applied independently on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branching {
    /// `+-sqrt(dt)` with probability 1/2 each.
    Two,
    /// `(+sqrt(3dt), 0, -sqrt(3dt))` with weights `(1/6, 2/3, 1/6)`.
    Three,
}

impl Branching {
    pub fn from_count(b: usize) -> Result<Self> {
        match b {
            2 => Ok(Branching::Two),
            3 => Ok(Branching::Three),
            _ => Err(Error::invalid(format!("branching must be 2 or 3, got {b}"))),
        }
    }

    pub fn count(self) -> usize {
        match self {
            Branching::Two => 2,
            Branching::Three => 3,
        }
    }

    fn scalar_scheme(self, dt: f64) -> Vec<(f64, f64)> {
        match self {
            Branching::Two => {
                let h = dt.sqrt();
                vec![(h, 0.5), (-h, 0.5)]
            }
            Branching::Three => {
                let h = (3.0 * dt).sqrt();
                vec![(h, 1.0 / 6.0), (0.0, 2.0 / 3.0), (-h, 1.0 / 6.0)]
            }
        }
    }
}

/// Joint outcomes of one step, in lexicographic order of the coordinate codes
/// (coordinate 0 varies slowest).
pub fn step_outcomes(branching: Branching, m: usize, dt: f64) -> Vec<Outcome> {
    let scalar = branching.scalar_scheme(dt);
    let b = scalar.len();
    let total = b.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            let mut code = vec![0; m];
            for j in (0..m).rev() {
                code[j] = idx % b;
                idx /= b;
            }
            let dw = code.iter().map(|&c| scalar[c].0).collect();
            let prob = code.iter().map(|&c| scalar[c].1).product();
            Outcome { dw, prob, code }
        })
        .collect()
}

/// Node of a recombining lattice: per coordinate, how many times each scalar
/// outcome has occurred so far.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeNode {
    /// `counts[j*b + c]` = occurrences of scalar outcome `c` on coordinate `j`.
    pub counts: Vec<u32>,
    /// Cumulative Wiener value `W_{t_k} - W_{t_0}`.
    pub w: Vec<f64>,
    /// Unconditional probability of the node.
    pub prob: f64,
}

/// Recombining discrete-noise approximation of the Wiener filtration.
#[derive(Debug, Clone)]
pub struct NoiseLattice {
    time_grid: TimeGrid,
    branching: Branching,
    m: usize,
    outcomes: Vec<Outcome>,
    slices: Vec<Vec<LatticeNode>>,
    /// `children[k][i * outcomes.len() + o]` = index at slice k+1.
    children: Vec<Vec<u32>>,
}

/// Default cap on the total number of recombining lattice nodes.
pub const LATTICE_NODE_BUDGET: u64 = 5_000_000;

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of recombined nodes at slice `k`: multisets of size `k` drawn from
/// `b` outcomes, independently on each of the `m` coordinates.
pub fn recombining_node_count(k: usize, branching: Branching, m: usize) -> u64 {
    let b = branching.count() as u64;
    binomial(k as u64 + b - 1, b - 1).pow(m as u32)
}

pub fn build_lattice(time_grid: TimeGrid, m: usize, branching: usize) -> Result<NoiseLattice> {
    let branching = Branching::from_count(branching)?;
    if m == 0 {
        return Err(Error::invalid("Wiener dimension must be >= 1"));
    }
    let total: u64 = (0..=time_grid.n_steps())
        .map(|k| recombining_node_count(k, branching, m))
        .sum();
    if total > LATTICE_NODE_BUDGET {
        return Err(Error::Budget { required: total, budget: LATTICE_NODE_BUDGET });
    }
    let dt = time_grid.dt();
    let outcomes = step_outcomes(branching, m, dt);
    let scalar = branching.scalar_scheme(dt);
    let b = branching.count();

    let root = LatticeNode { counts: vec![0; m * b], w: vec![0.0; m], prob: 1.0 };
    let mut slices = vec![vec![root]];
    let mut children = Vec::with_capacity(time_grid.n_steps());
    for _ in 0..time_grid.n_steps() {
        let current = slices.last().expect("root slice");
        let mut next: Vec<LatticeNode> = Vec::new();
        let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut links = Vec::with_capacity(current.len() * outcomes.len());
        for node in current {
            for out in &outcomes {
                let mut counts = node.counts.clone();
                for (j, &c) in out.code.iter().enumerate() {
                    counts[j * b + c] += 1;
                }
                let idx = match index.get(&counts) {
                    Some(&i) => i,
                    None => {
                        let w = (0..m)
                            .map(|j| {
                                (0..b).map(|c| counts[j * b + c] as f64 * scalar[c].0).sum()
                            })
                            .collect();
                        let i = next.len() as u32;
                        next.push(LatticeNode { counts: counts.clone(), w, prob: 0.0 });
                        index.insert(counts, i);
                        i
                    }
                };
                next[idx as usize].prob += node.prob * out.prob;
                links.push(idx);
            }
        }
        children.push(links);
        slices.push(next);
    }
    Ok(NoiseLattice { time_grid, branching, m, outcomes, slices, children })
}

impl NoiseLattice {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn branching(&self) -> Branching {
        self.branching
    }

    pub fn wiener_dim(&self) -> usize {
        self.m
    }

    /// One-step increments; identical for every step of a uniform grid.
    pub fn increments(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn slice(&self, k: usize) -> &[LatticeNode] {
        &self.slices[k]
    }

    pub fn node_count(&self, k: usize) -> usize {
        self.slices[k].len()
    }

    pub fn child(&self, k: usize, node: usize, outcome: usize) -> usize {
        self.children[k][node * self.outcomes.len() + outcome] as usize
    }
}

/// Backward-recursion view shared by recombining lattices and state trees.
///
/// Every node at slice `k < n_steps` has exactly one child per one-step
/// outcome, reached with the outcome's probability and Wiener increment.
pub trait Filtration {
    fn time_grid(&self) -> &TimeGrid;
    fn outcomes(&self) -> &[Outcome];
    /// First slice held by the structure.
    fn first_slice(&self) -> usize;
    fn slice_len(&self, k: usize) -> usize;
    fn child_of(&self, k: usize, node: usize, outcome: usize) -> usize;
}

impl Filtration for NoiseLattice {
    fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }
    fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }
    fn first_slice(&self) -> usize {
        0
    }
    fn slice_len(&self, k: usize) -> usize {
        self.slices[k].len()
    }
    fn child_of(&self, k: usize, node: usize, outcome: usize) -> usize {
        self.child(k, node, outcome)
    }
}

/// Monte Carlo Brownian increments. Layout of `dw` is `[path][step][coord]`;
/// `w` is `[path][slice][coord]` with `n_steps + 1` slices and `w[.,0,.] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    time_grid: TimeGrid,
    n_paths: usize,
    m: usize,
    seed: u64,
    dw: Vec<f64>,
    w: Vec<f64>,
}

/// Paths per RNG block; each block draws from its own ChaCha8 stream.
pub const PATH_BLOCK: usize = 256;

/// SplitMix64 finalizer, used to derive per-block seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of block `block` of a stream seeded with `seed`.
pub fn block_seed(seed: u64, block: u64) -> u64 {
    splitmix64(seed ^ splitmix64(block.wrapping_add(1)))
}

/// Draws `n_paths` Gaussian paths. Paths are generated in blocks of
/// [`PATH_BLOCK`], block `i` from `ChaCha8Rng::seed_from_u64(block_seed(seed, i))`
/// with standard normals scaled by `sqrt(dt)`, so output does not depend on the
/// number of worker threads.
pub fn sample_paths(time_grid: TimeGrid, m: usize, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be >= 1"));
    }
    if m == 0 {
        return Err(Error::invalid("Wiener dimension must be >= 1"));
    }
    let n = time_grid.n_steps();
    let sqrt_dt = time_grid.dt().sqrt();
    let per_path = n * m;
    let mut dw = vec![0.0; n_paths * per_path];
    dw.par_chunks_mut(PATH_BLOCK * per_path)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(block_seed(seed, block as u64));
            for v in chunk.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = g * sqrt_dt;
            }
        });
    let stride = (n + 1) * m;
    let mut w = vec![0.0; n_paths * stride];
    w.par_chunks_mut(stride).enumerate().for_each(|(p, wp)| {
        let inc = &dw[p * per_path..(p + 1) * per_path];
        for k in 0..n {
            for j in 0..m {
                wp[(k + 1) * m + j] = wp[k * m + j] + inc[k * m + j];
            }
        }
    });
    Ok(PathEnsemble { time_grid, n_paths, m, seed, dw, w })
}

impl PathEnsemble {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn wiener_dim(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment `W_{t_{k+1}} - W_{t_k}` of path `p`.
    pub fn dw(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * self.time_grid.n_steps() + k) * self.m;
        &self.dw[base..base + self.m]
    }

    /// `W_{t_k}` of path `p`.
    pub fn w(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * (self.time_grid.n_steps() + 1) + k) * self.m;
        &self.w[base..base + self.m]
    }

    pub fn raw_increments(&self) -> &[f64] {
        &self.dw
    }

    /// Ensemble restricted to the listed paths (duplicates allowed), in order.
    pub fn resample(&self, paths: &[usize]) -> PathEnsemble {
        let n = self.time_grid.n_steps();
        let per = n * self.m;
        let stride = (n + 1) * self.m;
        let mut dw = Vec::with_capacity(paths.len() * per);
        let mut w = Vec::with_capacity(paths.len() * stride);
        for &p in paths {
            dw.extend_from_slice(&self.dw[p * per..(p + 1) * per]);
            w.extend_from_slice(&self.w[p * stride..(p + 1) * stride]);
        }
        PathEnsemble { time_grid: self.time_grid, n_paths: paths.len(), m: self.m, seed: self.seed, dw, w }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_point_is_pinned() {
        let g = TimeGrid::new(0.1, 0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        let ts = g.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.index_of(0.3), Some(1));
        assert_eq!(g.index_of(0.25), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        assert!(build_lattice(g, 1, 4).is_err());
        assert!(build_lattice(g, 0, 2).is_err());
    }

    #[test]
    fn two_point_unit_step() {
        let g = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let lat = build_lattice(g, 1, 2).unwrap();
        let inc = lat.increments();
        assert_eq!(inc.len(), 2);
        assert_eq!((inc[0].dw[0], inc[0].prob), (1.0, 0.5));
        assert_eq!((inc[1].dw[0], inc[1].prob), (-1.0, 0.5));
    }

    #[test]
    fn binomial_recombines() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let lat = build_lattice(g, 1, 2).unwrap();
        assert_eq!(lat.node_count(2), 3);
        let probs: Vec<f64> = lat.slice(2).iter().map(|n| n.prob).collect();
        let mut sorted = probs.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn two_dimensional_outcomes_by_enumeration() {
        let dt = 0.37;
        let g = TimeGrid::new(0.0, dt, 1).unwrap();
        let lat = build_lattice(g, 2, 2).unwrap();
        let inc = lat.increments();
        assert_eq!(inc.len(), 4);
        let mut cov = [[0.0; 2]; 2];
        let mut mean = [0.0; 2];
        for o in inc {
            assert_eq!(o.prob, 0.25);
            for a in 0..2 {
                mean[a] += o.prob * o.dw[a];
                for b in 0..2 {
                    cov[a][b] += o.prob * o.dw[a] * o.dw[b];
                }
            }
        }
        assert_eq!(mean, [0.0, 0.0]);
        assert!((cov[0][0] - dt).abs() < 1e-15 && (cov[1][1] - dt).abs() < 1e-15);
        assert_eq!(cov[0][1], 0.0);
    }

    #[test]
    fn moments_exact_for_power_of_four_steps() {
        for &dt in &[1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0] {
            for br in [2usize, 3] {
                let inc = step_outcomes(Branching::from_count(br).unwrap(), 1, dt);
                let p: f64 = inc.iter().map(|o| o.prob).sum();
                let mean: f64 = inc.iter().map(|o| o.prob * o.dw[0]).sum();
                let var: f64 = inc.iter().map(|o| o.prob * o.dw[0] * o.dw[0]).sum();
                assert!((p - 1.0).abs() <= 1e-15);
                assert_eq!(mean, 0.0);
                assert!((var - dt).abs() <= 2.0 * f64::EPSILON * dt, "br={br} dt={dt} var={var}");
            }
        }
    }

    #[test]
    fn trinomial_weights() {
        let inc = step_outcomes(Branching::Three, 1, 0.12);
        let h = (3.0f64 * 0.12).sqrt();
        assert_eq!(inc[0].dw[0], h);
        assert_eq!(inc[1].dw[0], 0.0);
        assert_eq!(inc[2].dw[0], -h);
        assert_eq!(inc[0].prob, 1.0 / 6.0);
        assert_eq!(inc[1].prob, 2.0 / 3.0);
    }

    #[test]
    fn node_counts_match_multiset_formula() {
        for (br, m) in [(2usize, 1usize), (3, 1), (2, 2), (3, 2)] {
            let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
            let lat = build_lattice(g, m, br).unwrap();
            let b = Branching::from_count(br).unwrap();
            for k in 0..=20 {
                assert_eq!(lat.node_count(k) as u64, recombining_node_count(k, b, m));
                let total: f64 = lat.slice(k).iter().map(|n| n.prob).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paths_are_reproducible_and_anchored() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let a = sample_paths(g, 2, 700, 42).unwrap();
        let b = sample_paths(g, 2, 700, 42).unwrap();
        assert_eq!(a, b);
        let one = sample_paths(g, 1, 1, 7).unwrap();
        assert_eq!(one.w(0, 0), &[0.0]);
        let mut acc = 0.0;
        for k in 0..10 {
            acc += one.dw(0, k)[0];
            assert_eq!(one.w(0, k + 1)[0], acc);
        }
    }

    #[test]
    fn path_statistics() {
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let n = 100_000;
        let ens = sample_paths(g, 1, n, 2024).unwrap();
        let dt = g.dt();
        for k in 0..10 {
            let xs: Vec<f64> = (0..n).map(|p| ens.dw(p, k)[0]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
            assert!((0.0094..=0.0106).contains(&var), "step {k} variance {var}");
        }
    }
}
