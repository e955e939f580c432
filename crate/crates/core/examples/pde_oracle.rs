//! Finite-difference HJBI oracle against the lattice game and a closed form.

use sdg_core::game::{solve_value, GameTree, Side};
use sdg_core::grid::TimeGrid;
use sdg_core::pde_oracle::{compare_game_vs_pde, solve_hjbi_fd, Boundary, PdeGrid};
use sdg_core::problems::problem;

fn main() -> sdg_core::Result<()> {
    let heat = problem("heat-check")?;
    let spec = heat.spec();
    let h = 3.5 * std::f64::consts::PI;
    let grid = PdeGrid::cube(-h, h, 1, 200, Boundary::Clamped);
    let sol = solve_hjbi_fd(&spec, &grid, Side::Lower)?;
    let exact = heat.exact.unwrap();
    for x in [0.0, 0.7, 2.0] {
        println!("heat u(0, {x}) = {:.6}, exact {:.6}", sol.eval(0.0, &[x]), exact(0.0, &[x]));
    }

    let spec = problem("linear-driver")?.spec();
    for refine in [1, 2] {
        let tree = GameTree::build(&spec, TimeGrid::new(0.0, 1.0, 50 * refine)?, 2, 0, &[0.0])?;
        let field = solve_value(&spec, &tree, Side::Lower)?;
        let pde = solve_hjbi_fd(&spec, &PdeGrid::cube(-8.0, 8.0, 1, 199 * refine + 1, Boundary::OneSided), Side::Lower)?;
        let c = compare_game_vs_pde(&tree, &field, &pde);
        println!("refinement {refine}x: discrepancy {:.3e} over {} nodes", c.discrepancy, c.probes);
    }
    Ok(())
}
