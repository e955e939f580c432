//! Randomized invariants across modules.

use proptest::prelude::*;

use sdg_core::bsde::{compare_bsde, implicit_step, payoff_j};
use sdg_core::game::{solve_value, GameTree, Side};
use sdg_core::grid::{build_lattice, step_outcomes, Branching, TimeGrid};
use sdg_core::hamiltonian::{max_min, min_max};
use sdg_core::pde_oracle::{solve_hjbi_fd, Boundary, PdeGrid};
use sdg_core::problems::problem;
use sdg_core::sde::{lattice_forward, ControlProcess, TreeStart};
use sdg_core::sublinear::{closed_form_measurable, sublinear_eval, Direction, SublinearQuery};

fn query(k: f64, n: usize, xi: Vec<f64>, direction: Direction) -> SublinearQuery {
    SublinearQuery { k, start: 0, end: n, xi, direction }
}

fn terminal(n: usize, coef: &[f64]) -> Vec<f64> {
    let lat = build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap();
    lat.slice(n).iter().map(|node| coef[0] + coef[1] * node.w[0] + coef[2] * (3.0 * node.w[0]).sin()).collect()
}

/// Smallest step count with `dt L < 1`, plus `extra`.
fn steps(spec: &sdg_core::problem::ProblemSpec, extra: usize) -> usize {
    (spec.lipschitz() * spec.horizon()).floor() as usize + 1 + extra
}

fn game_value(key: &str, extra: usize, x0: f64, side: Side) -> f64 {
    let spec = problem(key).unwrap().spec();
    let n = steps(&spec, extra);
    let tree = GameTree::build(&spec, TimeGrid::new(0.0, spec.horizon(), n).unwrap(), 2, 0, &[x0]).unwrap();
    solve_value(&spec, &tree, side).unwrap().root()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sublinear_duality(n in 2usize..12, k in 0.0f64..1.5, c in prop::array::uniform3(-2.0f64..2.0)) {
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap();
        let xi = terminal(n, &c);
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        let up = sublinear_eval(&query(k, n, xi, Direction::Upper), &lat).unwrap();
        let low = sublinear_eval(&query(k, n, neg, Direction::Lower), &lat).unwrap();
        for (a, b) in up.iter().zip(&low) {
            prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sublinear_homogeneous_and_subadditive(
        n in 2usize..10, k in 0.0f64..1.5, lambda in 0.0f64..4.0,
        c1 in prop::array::uniform3(-2.0f64..2.0), c2 in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap();
        let (x1, x2) = (terminal(n, &c1), terminal(n, &c2));
        let e = |xi: Vec<f64>| sublinear_eval(&query(k, n, xi, Direction::Upper), &lat).unwrap()[0];
        let v1 = e(x1.clone());
        let v2 = e(x2.clone());
        let scaled = e(x1.iter().map(|v| lambda * v).collect());
        prop_assert!((scaled - lambda * v1).abs() <= 1e-11 * (1.0 + scaled.abs()));
        let sum = e(x1.iter().zip(&x2).map(|(a, b)| a + b).collect());
        prop_assert!(sum <= v1 + v2 + 1e-11);
    }

    #[test]
    fn sublinear_monotone_in_k(n in 2usize..10, k in 0.0f64..0.9, dk in 0.0f64..0.9, c in prop::array::uniform3(-2.0f64..2.0)) {
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap();
        let xi = terminal(n, &c);
        let a = sublinear_eval(&query(k, n, xi.clone(), Direction::Upper), &lat).unwrap()[0];
        let b = sublinear_eval(&query(k + dk, n, xi, Direction::Upper), &lat).unwrap()[0];
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn closed_form_involution(x in -5.0f64..5.0, k in 0.0f64..2.0, delta in 0.0f64..2.0) {
        let up = closed_form_measurable(x, k, delta, Direction::Upper);
        prop_assert!((closed_form_measurable(up, k, delta, Direction::Lower) - x).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn implicit_step_solves_equation(e in -10.0f64..10.0, dt in 0.001f64..0.5, a in -1.9f64..1.9, b in -3.0f64..3.0) {
        let g = |y: f64| a * y.sin() + b;
        let (y, r) = implicit_step(e, dt, g).unwrap();
        prop_assert!((y - e - dt * g(y)).abs() <= 1e-10 * e.abs().max(1.0));
        prop_assert!(r <= 1e-10 * e.abs().max(1.0));
    }

    #[test]
    fn max_min_below_min_max(nt in 1usize..6, ng in 1usize..6, seed in prop::collection::vec(-3i32..3, 36)) {
        let v: Vec<f64> = seed[..nt * ng].iter().map(|&s| s as f64).collect();
        let lo = max_min(&v, nt, ng);
        let up = min_max(&v, nt, ng);
        prop_assert!(lo.value <= up.value);
        let rows: Vec<f64> = (0..nt).map(|i| v[i * ng..(i + 1) * ng].iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        let first = rows.iter().position(|&r| r == lo.value).unwrap();
        prop_assert_eq!(lo.theta, first);
        let cols: Vec<f64> = (0..ng).map(|j| (0..nt).map(|i| v[i * ng + j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        prop_assert_eq!(up.gamma, cols.iter().position(|&c| c == up.value).unwrap());
    }

    #[test]
    fn lattice_outcomes_are_moment_matched(b in 2usize..4, m in 1usize..4, dt in 0.001f64..1.0) {
        let out = step_outcomes(Branching::from_count(b).unwrap(), m, dt);
        prop_assert!((out.iter().map(|o| o.prob).sum::<f64>() - 1.0).abs() <= 1e-14);
        for j in 0..m {
            let mean: f64 = out.iter().map(|o| o.prob * o.dw[j]).sum();
            let var: f64 = out.iter().map(|o| o.prob * o.dw[j] * o.dw[j]).sum();
            prop_assert!(mean.abs() <= 1e-14);
            prop_assert!((var - dt).abs() <= 1e-14 * (1.0 + dt));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lower_value_below_upper(
        key in prop::sample::select(vec!["cancel-drift", "isaacs-gap", "separable-sine", "clipped", "random-terminal"]),
        extra in 0usize..3, x0 in -2.0f64..2.0,
    ) {
        let lo = game_value(key, extra, x0, Side::Lower);
        let up = game_value(key, extra, x0, Side::Upper);
        prop_assert!(lo <= up + 1e-12, "{key}: {lo} > {up}");
    }

    #[test]
    fn value_shifts_with_terminal_constant(
        key in prop::sample::select(vec!["cancel-drift", "isaacs-gap", "separable-sine", "clipped"]),
        extra in 0usize..3, x0 in -2.0f64..2.0, c in -3.0f64..3.0,
    ) {
        let spec = problem(key).unwrap().spec();
        let n = steps(&spec, extra);
        let phi = spec.terminal_fn();
        let shifted = spec.clone().with_terminal(move |x, h| phi(x, h) + c);
        let grid = TimeGrid::new(0.0, spec.horizon(), n).unwrap();
        for side in [Side::Lower, Side::Upper] {
            let v = solve_value(&spec, &GameTree::build(&spec, grid, 2, 0, &[x0]).unwrap(), side).unwrap().root();
            let w = solve_value(&shifted, &GameTree::build(&shifted, grid, 2, 0, &[x0]).unwrap(), side).unwrap().root();
            prop_assert!((w - v - c).abs() <= 1e-12 * (1.0 + v.abs() + c.abs()));
        }
    }

    #[test]
    fn bsde_comparison_on_ordered_data(
        n in 2usize..8, shift in 0.0f64..1.0, dg in 0.0f64..0.5, a in -1.0f64..1.0,
        c in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let spec = problem("linear-driver").unwrap().spec();
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n).unwrap(), 1, 2).unwrap();
        let tree = lattice_forward(&spec, &lat, &TreeStart::at(&spec, 0, vec![0.0]), &ControlProcess::constant(0, 0)).unwrap();
        let xi2: Vec<f64> = (0..tree.leaf_count()).map(|i| c[0] + c[1] * tree.state(n, i)[0] + c[2] * tree.state(n, i)[0].sin()).collect();
        let xi1: Vec<f64> = xi2.iter().map(|v| v - shift).collect();
        let g1 = move |_: usize, _: usize, y: f64, z: &[f64]| a * y + 0.5 * z[0].abs();
        let g2 = move |_: usize, _: usize, y: f64, z: &[f64]| a * y + 0.5 * z[0].abs() + dg;
        let rep = compare_bsde(&tree, &xi1, &xi2, &g1, &g2).unwrap();
        prop_assert_eq!(rep.violations, 0);
    }

    /// Only holds where constant controls are optimal, here a monotone terminal
    /// with a control-additive drift. A nonmonotone terminal lets the adapted
    /// responder beat every constant pair.
    #[test]
    fn constant_control_payoffs_sandwich_values(
        key in prop::sample::select(vec!["cancel-drift", "one-player"]),
        extra in 0usize..3, x0 in -2.0f64..2.0,
    ) {
        let spec = problem(key).unwrap().spec();
        let n = steps(&spec, extra);
        let grid = TimeGrid::new(0.0, spec.horizon(), n).unwrap();
        let lat = build_lattice(grid, spec.m(), 2).unwrap();
        let (nt, ng) = (spec.theta_grid().len(), spec.gamma_grid().len());
        let mut j = vec![0.0; nt * ng];
        for i in 0..nt {
            for g in 0..ng {
                let p = payoff_j(&spec, &lat, 0, &[x0], &ControlProcess::constant(i, g)).unwrap();
                prop_assert!(p.within_bound);
                j[i * ng + g] = p.value;
            }
        }
        let tree = GameTree::build(&spec, grid, 2, 0, &[x0]).unwrap();
        let lo = solve_value(&spec, &tree, Side::Lower).unwrap().root();
        let up = solve_value(&spec, &tree, Side::Upper).unwrap().root();
        prop_assert!(max_min(&j, nt, ng).value <= lo + 1e-10);
        prop_assert!(up <= min_max(&j, nt, ng).value + 1e-10);
    }

    #[test]
    fn pde_respects_maximum_principle(n_x in 9usize..60, half in 2.0f64..6.0, side in prop::sample::select(vec![Side::Lower, Side::Upper])) {
        let spec = problem("clipped").unwrap().spec();
        let grid = PdeGrid::cube(-half, half, 1, n_x, Boundary::Clamped);
        let sol = solve_hjbi_fd(&spec, &grid, side).unwrap();
        let term = sol.u.last().unwrap();
        let (lo, hi) = term.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for slice in &sol.u {
            for &v in slice {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        for (k, slice) in sol.u.iter().enumerate().step_by(7) {
            for (flat, &v) in slice.iter().enumerate().step_by(5) {
                prop_assert!((sol.eval(sol.times[k], &grid.point(flat)) - v).abs() <= 1e-12);
            }
        }
    }
}
