//! Bump kernel, mollification and the barrier function.

use sdg_core::problem::smoothing::{bump_mass, mollify, Barrier, MollifierConfig};

fn main() {
    println!("bump mass: d=1 {:.12}, d=2 {:.12}", bump_mass(1), bump_mass(2));
    let kink = |x: &[f64]| x[0].abs();
    for delta in [0.4, 0.1, 0.025] {
        let m = mollify(kink, 1, MollifierConfig { delta, points_per_axis: 32 });
        println!("delta {delta:<5}: |x| smoothed at 0 = {:.5}", m.eval(&[0.0]));
    }
    let g = Barrier::with_default_rule(1);
    for x in [0.0, 1.0, 5.0] {
        println!("g({x}) = {:.5}  (|x| - 3 = {})", g.eval(&[x]).value, x - 3.0);
    }
}
