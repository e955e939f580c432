//! The same recursive payoff solved on a lattice and by least-squares Monte
//! Carlo under a feedback policy taken from the lattice game.

use sdg_core::bsde::{payoff_j, LsmcConfig};
use sdg_core::game::{lsmc_policy_check, solve_value, GameTree, Side};
use sdg_core::grid::{build_lattice, TimeGrid};
use sdg_core::problems::problem;
use sdg_core::sde::ControlProcess;

fn main() -> sdg_core::Result<()> {
    let spec = problem("linear-driver")?.spec();
    let grid = TimeGrid::new(0.0, spec.horizon(), 10)?;
    let lat = build_lattice(grid, spec.m(), 2)?;
    let j = payoff_j(&spec, &lat, 0, &[0.2], &ControlProcess::constant(0, 0))?;
    println!("lattice payoff {:.6} (a-priori bound {:.2}, within: {})", j.value, j.bound, j.within_bound);

    let spec = problem("one-player")?.spec();
    let tree = GameTree::build(&spec, TimeGrid::new(0.0, spec.horizon(), 8)?, 2, 0, &[0.2])?;
    let field = solve_value(&spec, &tree, Side::Lower)?;
    let rep = lsmc_policy_check(&spec, &tree, &field, 20_000, LsmcConfig { degree: 2, bootstrap: 40, seed: 1 })?;
    println!("lattice {:.6}  LSMC {:.6} +- {:.1e}  z = {:.2}", rep.lattice_value, rep.mc_value, rep.se, rep.z_score());
    Ok(())
}
