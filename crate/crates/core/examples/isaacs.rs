//! Lower and upper Hamiltonians by enumeration, with and without the Isaacs
//! condition.

use sdg_core::hamiltonian::{h_minus, h_plus, isaacs_check, random_points, HamiltonianPoint};
use sdg_core::problems::problem;

fn main() -> sdg_core::Result<()> {
    for key in ["isaacs-gap", "separable-sine"] {
        let spec = problem(key)?.spec();
        let (th, ga) = (spec.theta_grid(), spec.gamma_grid());
        let pt = HamiltonianPoint::first_order(0.0, vec![0.0], vec![1.0], 0.0, vec![0.0]);
        let (lo, up) = (h_minus(&pt, &spec, th, ga), h_plus(&pt, &spec, th, ga));
        println!("{key}: H- = {:+.3} (theta #{}), H+ = {:+.3} (gamma #{})", lo.value, lo.theta, up.value, up.gamma);
        let rep = isaacs_check(&spec, &random_points(&spec, 500, 2.0, 7), 1e-12);
        println!("  largest gap over 500 random points: {:.3e}", rep.max_gap);
    }
    Ok(())
}
