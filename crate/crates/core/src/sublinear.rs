//! Sublinear conditional expectations defined by the BSDEs with drivers
//! `+K(|y| + |z|)` (upper) and `-K(|y| + |z|)` (lower).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bsde::{solve_backward, solve_lattice, BsdeSolution};
use crate::error::{Error, Result};
use crate::grid::Filtration;
use crate::problem::ProblemSpec;
use crate::sde::StateTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SublinearQuery {
    pub k: f64,
    pub start: usize,
    pub end: usize,
    /// Values at the nodes of slice `end`.
    pub xi: Vec<f64>,
    pub direction: Direction,
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Full backward solution of the query; values at `start` are `y_at(start)`.
pub fn sublinear_solve<F: Filtration + Sync>(query: &SublinearQuery, filt: &F) -> Result<BsdeSolution> {
    if !(query.k >= 0.0) {
        return Err(Error::invalid(format!("K must be >= 0, got {}", query.k)));
    }
    let dt = filt.time_grid().dt();
    if query.k * dt >= 1.0 {
        return Err(Error::StepTooLarge { product: query.k * dt, min_steps: 0 });
    }
    let k = query.k;
    let sign = match query.direction {
        Direction::Upper => 1.0,
        Direction::Lower => -1.0,
    };
    solve_backward(filt, query.start, query.end, &query.xi, &|_, _, y, z| sign * k * (y.abs() + norm(z)))
}

/// Values at slice `start`.
pub fn sublinear_eval<F: Filtration + Sync>(query: &SublinearQuery, filt: &F) -> Result<Vec<f64>> {
    Ok(sublinear_solve(query, filt)?.y_at(query.start).to_vec())
}

/// `xi^+ e^{K delta} - xi^- e^{-K delta}` (upper) or its mirror (lower).
pub fn closed_form_measurable(xi: f64, k: f64, delta: f64, direction: Direction) -> f64 {
    let (pos, neg) = (xi.max(0.0), (-xi).max(0.0));
    let (up, down) = ((k * delta).exp(), (-k * delta).exp());
    match direction {
        Direction::Upper => pos * up - neg * down,
        Direction::Lower => pos * down - neg * up,
    }
}

/// Three-level Richardson extrapolation for an `O(1/n)` error expansion from
/// values at `n`, `2n`, `4n`.
pub fn richardson(v_n: f64, v_2n: f64, v_4n: f64) -> f64 {
    (8.0 * v_4n - 6.0 * v_2n + v_n) / 3.0
}

/// Piecewise-constant density parameters, `h0[k - start][node]` and
/// `h[k - start][node * m + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilt {
    pub h0: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl Tilt {
    pub fn zero<F: Filtration>(filt: &F, start: usize, end: usize) -> Self {
        let m = filt.outcomes()[0].dw.len();
        Tilt {
            h0: (start..end).map(|k| vec![0.0; filt.slice_len(k)]).collect(),
            h: (start..end).map(|k| vec![0.0; filt.slice_len(k) * m]).collect(),
        }
    }

    /// Uniform draws with `|h0| <= K` and `|h| <= K` per node.
    pub fn random<F: Filtration>(filt: &F, start: usize, end: usize, k: f64, seed: u64) -> Self {
        let m = filt.outcomes()[0].dw.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Tilt::zero(filt, start, end);
        for s in 0..end - start {
            for v in out.h0[s].iter_mut() {
                *v = rng.random_range(-k..=k);
            }
            for node in out.h[s].chunks_mut(m) {
                for v in node.iter_mut() {
                    *v = rng.random_range(-1.0..=1.0);
                }
                let scale = rng.random_range(0.0..=k) / norm(node).max(1e-300);
                node.iter_mut().for_each(|v| *v *= scale);
            }
        }
        out
    }
}

/// `E_start[xi * prod exp(h dW - (|h|^2 + 2 h0) dt / 2)]`, exact on the filtration.
pub fn tilt_bound<F: Filtration>(query: &SublinearQuery, tilt: &Tilt, filt: &F) -> Result<Vec<f64>> {
    let m = filt.outcomes()[0].dw.len();
    let dt = filt.time_grid().dt();
    for s in 0..query.end - query.start {
        let bad_h0 = tilt.h0[s].iter().any(|v| v.abs() > query.k + 1e-12);
        let bad_h = tilt.h[s].chunks(m).any(|h| norm(h) > query.k + 1e-12);
        if bad_h0 || bad_h {
            return Err(Error::invalid(format!("tilt exceeds K = {} on slice {}", query.k, query.start + s)));
        }
    }
    let mut v = query.xi.clone();
    for k in (query.start..query.end).rev() {
        let s = k - query.start;
        v = (0..filt.slice_len(k))
            .map(|i| {
                let h = &tilt.h[s][i * m..(i + 1) * m];
                let h2: f64 = h.iter().map(|a| a * a).sum();
                filt.outcomes()
                    .iter()
                    .enumerate()
                    .map(|(o, out)| {
                        let hw: f64 = h.iter().zip(&out.dw).map(|(a, b)| a * b).sum();
                        let weight = (hw - 0.5 * (h2 + 2.0 * tilt.h0[s][i]) * dt).exp();
                        out.prob * weight * v[filt.child_of(k, i, o)]
                    })
                    .sum()
            })
            .collect();
    }
    Ok(v)
}

/// Tolerance for tilted expectations against the BSDE functionals.
pub fn tilt_tolerance(dt: f64, k: f64, xi: &[f64]) -> f64 {
    5.0 * dt * k * xi.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Outcome of the three domination checks, with the smallest margin of each
/// (`>= 0` when the inequality holds without tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub chain: bool,
    pub chain_margin: f64,
    /// `(slice, node)` of the worst chain violation.
    pub chain_witness: Option<(usize, usize)>,
    pub sqrt_lower: bool,
    pub sqrt_lower_margin: f64,
    pub upper_l2: bool,
    pub upper_l2_margin: f64,
    pub tolerance: f64,
}

impl DominationReport {
    pub fn all(&self) -> bool {
        self.chain && self.sqrt_lower && self.upper_l2
    }
}

/// Checks on `tree` with the problem driver:
/// (a) `E_L[xi1 - xi2] <= G[xi1] - G[xi2] <= E^L[xi1 - xi2]` at every node;
/// (b) `E[sqrt|xi|] <= sqrt(E_L[|xi|] e^{(L+2) L D})` at the root;
/// (c) `E^L[|xi|] <= sqrt(e^{(L+2) L D} E[|xi|^2])` at the root,
/// with `xi = xi1 - xi2` and `D` the tree span. (b) and (c) carry a
/// tolerance `5 dt L max(||xi||, 1)`.
pub fn domination_suite(spec: &ProblemSpec, tree: &StateTree, xi1: &[f64], xi2: &[f64], l: f64) -> Result<DominationReport> {
    let grid = *tree.time_grid();
    let (start, end) = (tree.start_step(), grid.n_steps());
    let g1 = solve_lattice(spec, tree, xi1, None)?;
    let g2 = solve_lattice(spec, tree, xi2, None)?;
    let diff: Vec<f64> = xi1.iter().zip(xi2).map(|(a, b)| a - b).collect();
    let query = |xi: Vec<f64>, direction| SublinearQuery { k: l, start, end, xi, direction };
    let up = sublinear_solve(&query(diff.clone(), Direction::Upper), tree)?;
    let lo = sublinear_solve(&query(diff.clone(), Direction::Lower), tree)?;
    let mut chain_margin = f64::INFINITY;
    let mut chain_witness = None;
    for k in start..=end {
        for i in 0..tree.slice_len(k) {
            let g = g1.y_at(k)[i] - g2.y_at(k)[i];
            let margin = (g - lo.y_at(k)[i]).min(up.y_at(k)[i] - g);
            if margin < chain_margin {
                chain_margin = margin;
                chain_witness = Some((k, i));
            }
        }
    }
    let chain = chain_margin >= -1e-9;

    let abs: Vec<f64> = diff.iter().map(|v| v.abs()).collect();
    let span = grid.horizon() - grid.time(start);
    let factor = ((l + 2.0) * l * span).exp();
    let weights = &tree.slice(end).weights;
    let expect = |f: &dyn Fn(f64) -> f64| -> f64 { weights.iter().zip(&abs).map(|(w, v)| w * f(*v)).sum() };
    let lower_abs = sublinear_eval(&query(abs.clone(), Direction::Lower), tree)?[0];
    let upper_abs = sublinear_eval(&query(abs.clone(), Direction::Upper), tree)?[0];
    let tolerance = 5.0 * grid.dt() * l * abs.iter().cloned().fold(1.0, f64::max);
    let sqrt_lower_margin = (lower_abs.max(0.0) * factor).sqrt() - expect(&|v| v.sqrt());
    let upper_l2_margin = (factor * expect(&|v| v * v)).sqrt() - upper_abs;
    Ok(DominationReport {
        chain,
        chain_margin,
        chain_witness: if chain { None } else { chain_witness },
        sqrt_lower: sqrt_lower_margin >= -tolerance,
        sqrt_lower_margin,
        upper_l2: upper_l2_margin >= -tolerance,
        upper_l2_margin,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_lattice, TimeGrid};

    fn lattice(n: usize) -> crate::grid::NoiseLattice {
        build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap()
    }

    fn q(k: f64, n: usize, xi: Vec<f64>, direction: Direction) -> SublinearQuery {
        SublinearQuery { k, start: 0, end: n, xi, direction }
    }

    #[test]
    fn closed_form_values() {
        assert!((closed_form_measurable(1.0, 0.5, 1.0, Direction::Upper) - 0.5f64.exp()).abs() < 1e-15);
        assert_eq!(closed_form_measurable(-3.2, 0.7, 0.0, Direction::Lower), -3.2);
        let x = -1.3;
        let up = closed_form_measurable(x, 0.8, 0.6, Direction::Upper);
        assert!((closed_form_measurable(up, 0.8, 0.6, Direction::Lower) - x).abs() < 1e-15);
    }

    #[test]
    fn lattice_matches_discrete_closed_form() {
        let lat = lattice(25);
        let xi = vec![1.0; lat.node_count(25)];
        let v = sublinear_eval(&q(0.5, 25, xi, Direction::Upper), &lat).unwrap()[0];
        assert!((v - (1.0 - 0.5 / 25.0f64).powi(-25)).abs() < 1e-12);
    }

    #[test]
    fn richardson_is_exact_on_quadratic_error() {
        let f = |n: f64| 2.0 + 3.0 / n - 5.0 / (n * n);
        assert!((richardson(f(10.0), f(20.0), f(40.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_k_is_expectation() {
        let lat = lattice(6);
        let xi: Vec<f64> = lat.slice(6).iter().map(|n| n.w[0].powi(3) + n.w[0]).collect();
        let up = sublinear_eval(&q(0.0, 6, xi.clone(), Direction::Upper), &lat).unwrap();
        let lo = sublinear_eval(&q(0.0, 6, xi.clone(), Direction::Lower), &lat).unwrap();
        assert_eq!(up, lo);
        assert!(up[0].abs() < 1e-12);
    }

    #[test]
    fn negative_k_rejected() {
        let lat = lattice(2);
        assert!(sublinear_eval(&q(-1.0, 2, vec![0.0; 3], Direction::Upper), &lat).is_err());
    }

    #[test]
    fn zero_tilt_is_plain_expectation() {
        let lat = lattice(5);
        let xi: Vec<f64> = lat.slice(5).iter().map(|n| n.w[0].sin()).collect();
        let query = q(1.0, 5, xi.clone(), Direction::Upper);
        let e = tilt_bound(&query, &Tilt::zero(&lat, 0, 5), &lat).unwrap()[0];
        let plain: f64 = lat.slice(5).iter().zip(&xi).map(|(n, v)| n.prob * v).sum();
        assert!((e - plain).abs() < 1e-14);
        let up = sublinear_eval(&query, &lat).unwrap()[0];
        let lo = sublinear_eval(&SublinearQuery { direction: Direction::Lower, ..query }, &lat).unwrap()[0];
        assert!(lo <= e && e <= up);
    }

    #[test]
    fn oversized_tilt_rejected() {
        let lat = lattice(2);
        let mut t = Tilt::zero(&lat, 0, 2);
        t.h0[1][0] = 2.0;
        assert!(tilt_bound(&q(1.0, 2, vec![0.0; 3], Direction::Upper), &t, &lat).is_err());
    }
}
