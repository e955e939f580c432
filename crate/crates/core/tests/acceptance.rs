//! The thirteen acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see the
//! lines; every criterion runs even if an earlier one fails.

use std::time::Instant;

use sdg_core::experiment::{ExperimentConfig, ResultBundle};

fn run(json: &str) -> Result<ResultBundle, String> {
    let cfg = ExperimentConfig::from_json(json).map_err(|e| e.to_string())?;
    cfg.validate().and_then(|e| e.run()).map_err(|e| e.to_string())
}

struct Outcome {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { notes: Vec::new(), failures: Vec::new() }
    }

    /// Runs a config, requires every asserted scalar to pass and notes `show`.
    fn bundle(&mut self, json: &str, show: &[&str]) -> Option<ResultBundle> {
        match run(json) {
            Ok(b) => {
                for s in b.failures() {
                    self.failures.push(format!("{}/{}={:?}", s.suite, s.name, s.value));
                }
                for name in show {
                    match b.scalars.iter().find(|s| s.name == *name) {
                        Some(s) => self.notes.push(format!("{}={}", name, fmt(s.value))),
                        None => self.failures.push(format!("{name} missing")),
                    }
                }
                Some(b)
            }
            Err(e) => {
                self.failures.push(e);
                None
            }
        }
    }

    fn require(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("null".into(), |v| format!("{v:.3e}"))
}

fn value(b: &Option<ResultBundle>, name: &str) -> Option<f64> {
    b.as_ref()?.scalars.iter().find(|s| s.name == name)?.value
}

fn criterion(id: usize, title: &str, body: impl FnOnce(&mut Outcome)) -> bool {
    let clock = Instant::now();
    let mut out = Outcome::new();
    body(&mut out);
    let pass = out.failures.is_empty();
    println!(
        "criterion {id:>2} {} {title} [{:.1}s] {}{}",
        if pass { "PASS" } else { "FAIL" },
        clock.elapsed().as_secs_f64(),
        out.notes.join(" "),
        if pass { String::new() } else { format!(" failures: {}", out.failures.join(", ")) }
    );
    pass
}

#[test]
fn acceptance() {
    let mut results = Vec::new();

    results.push(criterion(1, "sublinear closed form", |o| {
        o.bundle(
            r#"{"schema_version": 1, "problem": "heat-check", "suites": ["sublinear"], "instances": 3, "seed": 11}"#,
            &["richardson_error_upper", "richardson_error_lower", "k_zero_error"],
        );
    }));

    results.push(criterion(2, "duality, sublinearity, monotonicity", |o| {
        o.bundle(
            r#"{"schema_version": 1, "problem": "heat-check", "suites": ["sublinear"], "instances": 200, "seed": 12}"#,
            &["duality_error", "homogeneity_error", "subadditivity_violations", "monotone_k_violations", "tilt_violations"],
        );
    }));

    results.push(criterion(3, "domination chain", |o| {
        for key in ["linear-driver", "random-terminal", "cancel-drift"] {
            o.bundle(
                &format!(r#"{{"schema_version": 1, "problem": "{key}", "suites": ["domination"], "instances": 100, "seed": 13}}"#),
                &["chain_violations", "chain_min_margin"],
            );
        }
    }));

    results.push(criterion(4, "BSDE comparison", |o| {
        for key in ["linear-driver", "random-terminal"] {
            o.bundle(
                &format!(r#"{{"schema_version": 1, "problem": "{key}", "suites": ["comparison"], "instances": 100, "seed": 14}}"#),
                &["violations", "max_excess"],
            );
        }
    }));

    results.push(criterion(5, "minimax inequality and Isaacs gap", |o| {
        let b = o.bundle(
            r#"{"schema_version": 1, "problem": "isaacs-gap", "suites": ["isaacs"], "isaacs_mode": "expect-gap", "seed": 15}"#,
            &["minimax_violations", "h_minus_unit_p", "h_plus_unit_p"],
        );
        o.require("H- = -1", value(&b, "h_minus_unit_p") == Some(-1.0));
        o.require("H+ = +1", value(&b, "h_plus_unit_p") == Some(1.0));
        for key in ["cancel-drift", "clipped", "separable-sine", "random-terminal"] {
            o.bundle(
                &format!(r#"{{"schema_version": 1, "problem": "{key}", "suites": ["isaacs"], "seed": 15}}"#),
                &[],
            );
        }
    }));

    // Criteria 6 to 8 share one lattice run on cancel-drift.
    let dpp = run(
        r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["dpp"], "solver": "lsmc",
            "lattice": {"n_steps": 12, "x0": [0.3]}, "monte_carlo": {"n_paths": 50000, "bootstrap": 50, "degree": 2}, "seed": 16}"#,
    );
    let dpp_check = |o: &mut Outcome, names: &[&str]| match &dpp {
        Ok(b) => {
            for name in names {
                match b.scalars.iter().find(|s| s.name == *name) {
                    Some(s) => {
                        o.notes.push(format!("{name}={}", fmt(s.value)));
                        o.require(name, s.pass);
                    }
                    None => o.failures.push(format!("{name} missing")),
                }
            }
        }
        Err(e) => o.failures.push(e.clone()),
    };

    results.push(criterion(6, "value computation on cancel-drift", |o| {
        dpp_check(o, &["exact_error_lower", "exact_error_upper", "lower_upper_gap"]);
        let gap = dpp.as_ref().ok().and_then(|b| b.scalar("dpp", "lower_upper_gap")?.value);
        o.require("V = U within 1e-10", gap.is_some_and(|g| g <= 1e-10));
    }));

    results.push(criterion(7, "DPP identity and LSMC cross-check", |o| {
        dpp_check(o, &["dpp_span", "dpp_residual_lower", "dpp_residual_upper", "policy_mc_z"]);
        let span = dpp.as_ref().ok().and_then(|b| b.scalar("dpp", "dpp_span")?.value);
        o.require("span <= 6", span.is_some_and(|s| s <= 6.0));
        o.bundle(
            r#"{"schema_version": 1, "problem": "random-terminal", "suites": ["dpp"], "lattice": {"n_steps": 5}, "seed": 17}"#,
            &["dpp_residual_lower", "dpp_residual_upper"],
        );
    }));

    results.push(criterion(8, "epsilon-optimal strategies", |o| {
        dpp_check(o, &["epsilon_lower", "epsilon_upper", "maximizer_gain_lower", "minimizer_gain_lower", "maximizer_gain_upper", "minimizer_gain_upper"]);
    }));

    results.push(criterion(9, "regularity", |o| {
        for (key, n) in [("clipped", 10), ("cancel-drift", 6), ("linear-driver", 8), ("separable-sine", 6)] {
            o.bundle(
                &format!(r#"{{"schema_version": 1, "problem": "{key}", "suites": ["regularity"], "lattice": {{"n_steps": {n}}}, "seed": 18}}"#),
                &["lipschitz_growth_excess"],
            );
        }
    }));

    results.push(criterion(10, "freezing-error rate", |o| {
        o.bundle(
            r#"{"schema_version": 1, "problem": "clipped", "suites": ["freezing-rate"], "seed": 19}"#,
            &["slope_xi0", "slope_xi5", "slope_xi10", "growth_ratio"],
        );
    }));

    results.push(criterion(11, "stability", |o| {
        for key in ["clipped", "separable-sine"] {
            o.bundle(
                &format!(r#"{{"schema_version": 1, "problem": "{key}", "suites": ["stability"], "lattice": {{"n_steps": 10}}, "seed": 20}}"#),
                &["slope"],
            );
        }
    }));

    results.push(criterion(12, "PDE cross-validation", |o| {
        let cancel = o.bundle(
            r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["pde-cross"], "lattice": {"x0": [0.25]},
                "pde": {"n_x": 200, "n_steps": 50, "lo": -8, "hi": 8}}"#,
            &["discrepancy_1x", "refined_discrepancy"],
        );
        o.require("cancel-drift within 5e-2", value(&cancel, "discrepancy_1x").is_some_and(|d| d <= 5e-2));
        let single = o.bundle(
            r#"{"schema_version": 1, "problem": "linear-driver", "suites": ["pde-cross"], "pde": {"n_x": 200, "n_steps": 50, "lo": -8, "hi": 8}}"#,
            &["discrepancy_1x", "halving_ratio"],
        );
        o.require("halving within 30%", value(&single, "halving_ratio").is_some_and(|r| (0.35..=0.65).contains(&r)));
        let heat = o.bundle(
            r#"{"schema_version": 1, "problem": "heat-check", "suites": ["pde-cross"],
                "pde": {"n_x": 200, "n_steps": 50, "lo": -10.995574287564276, "hi": 10.995574287564276, "boundary": "clamped", "expect_halving": false}}"#,
            &["oracle_exact_error_1x", "discrepancy_1x"],
        );
        o.require("heat within 2e-3", value(&heat, "oracle_exact_error_1x").is_some_and(|e| e <= 2e-3));
    }));

    results.push(criterion(13, "mollifier and barrier", |o| {
        o.bundle(
            r#"{"schema_version": 1, "problem": "heat-check", "suites": ["smoothing"], "seed": 21}"#,
            &["bump_mass_error_d1", "bump_mass_error_d2", "barrier_at_zero", "barrier_below_violations", "convexity_violations", "mollifier_sup_excess"],
        );
    }));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    assert_eq!(passed, results.len());
}
