//! Lower and upper values of a lattice game, the DPP residual and a greedy
//! strategy profile.

use sdg_core::game::{dpp_residual, extract_epsilon_optimal, lower_upper_gap, solve_value, GameTree, Side};
use sdg_core::grid::TimeGrid;
use sdg_core::problems::problem;

fn main() -> sdg_core::Result<()> {
    let named = problem("cancel-drift")?;
    let spec = named.spec();
    let n = 8;
    let x0 = 0.3;
    let tree = GameTree::build(&spec, TimeGrid::new(0.0, spec.horizon(), n)?, 2, 0, &[x0])?;
    let lower = solve_value(&spec, &tree, Side::Lower)?;
    let upper = solve_value(&spec, &tree, Side::Upper)?;
    let (gap, inverted) = lower_upper_gap(&lower, &upper)?;
    println!("{} nodes, {:?} control pairs", tree.node_count(), tree.pairs());
    println!("lower {:.12}  upper {:.12}  exact {:.12}", lower.root(), upper.root(), (named.exact.unwrap())(0.0, &[x0]));
    println!("sup gap {gap:.2e}, inverted nodes {inverted}");

    let dpp = dpp_residual(&spec, &tree, &lower, 0, 2, 8)?;
    println!("DPP residual over steps 0..2: {:.2e}", dpp.max_residual);

    let profile = extract_epsilon_optimal(&spec, &tree, &lower, 2)?;
    println!("greedy profile: |J - V| = {:.2e}", profile.epsilon);
    Ok(())
}
