//! Builds an experiment from JSON, runs it and writes the result bundle.
//!
//! `cargo run --example run_experiment -- out_dir`

use sdg_core::experiment::ExperimentConfig;

fn main() -> sdg_core::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("sdg-example").display().to_string());
    let cfg = ExperimentConfig::from_json(
        r#"{"schema_version": 1, "problem": "clipped", "suites": ["dpp", "regularity", "freezing-rate"],
            "lattice": {"n_steps": 6}, "seed": 42}"#,
    )?;
    let bundle = cfg.validate()?.run()?;
    for s in &bundle.scalars {
        println!("{:<14} {:<28} {:>12.4e} {}", s.suite, s.name, s.value.unwrap_or(f64::NAN), if s.pass { "ok" } else { "FAIL" });
    }
    bundle.write(std::path::Path::new(&out))?;
    println!("wrote {out}/results.json");
    Ok(())
}
