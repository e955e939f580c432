//! Named problems with their stated facts, and the traceability matrix.

use sdg_core::problems::{catalog, write_trace_csv};

fn main() -> sdg_core::Result<()> {
    for p in catalog() {
        let spec = p.spec();
        println!("{} (L = {}, Isaacs {}): {}", p.key, spec.lipschitz(), p.isaacs, p.summary);
        for f in &p.facts {
            println!("    [{:?}] {}", f.basis, f.statement);
        }
    }
    write_trace_csv(std::io::stdout())
}
