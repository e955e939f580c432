//! Sublinear expectations on a binomial lattice against their closed form.

use sdg_core::grid::{build_lattice, TimeGrid};
use sdg_core::sublinear::{closed_form_measurable, richardson, sublinear_eval, Direction, SublinearQuery};

fn main() -> sdg_core::Result<()> {
    let k = 0.5;
    let target = closed_form_measurable(1.0, k, 1.0, Direction::Upper);
    let mut vals = Vec::new();
    for n in [25, 50, 100] {
        let lat = build_lattice(TimeGrid::new(0.0, 1.0, n)?, 1, 2)?;
        let q = SublinearQuery { k, start: 0, end: n, xi: vec![1.0; lat.node_count(n)], direction: Direction::Upper };
        let v = sublinear_eval(&q, &lat)?[0];
        println!("n = {n:>3}: {v:.8}  error {:.2e}", (v - target).abs());
        vals.push(v);
    }
    let ext = richardson(vals[0], vals[1], vals[2]);
    println!("Richardson {ext:.10} vs e^0.5 = {target:.10}");

    // Duality on a random-looking terminal.
    let n = 6;
    let lat = build_lattice(TimeGrid::new(0.0, 1.0, n)?, 1, 2)?;
    let xi: Vec<f64> = lat.slice(n).iter().map(|v| (3.0 * v.w[0]).sin()).collect();
    let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
    let up = sublinear_eval(&SublinearQuery { k: 1.0, start: 0, end: n, xi, direction: Direction::Upper }, &lat)?[0];
    let lo = sublinear_eval(&SublinearQuery { k: 1.0, start: 0, end: n, xi: neg, direction: Direction::Lower }, &lat)?[0];
    println!("upper {up:.6}, -lower(-xi) {:.6}", -lo);
    Ok(())
}
