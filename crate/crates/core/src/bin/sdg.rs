use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdg_core::experiment::{golden_check, run_config, threads_from_env, GoldenManifest, ResultBundle, SUITES};
use sdg_core::problems::{catalog, write_trace_csv};

/// Runs game and BSDE property suites on named problems.
#[derive(Parser)]
#[command(name = "sdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a JSON config; exit 0 pass, 1 failure, 2 config error, 3 budget.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare `<results>/results.json` against `<golden>/golden.json`.
    GoldenCheck { results: PathBuf, golden: PathBuf },
    /// Freeze a results directory into a golden manifest.
    FreezeGolden { results: PathBuf, golden: PathBuf },
    ListProblems,
    ListSuites,
    /// Print the property traceability matrix as CSV.
    TraceMatrix,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = threads_from_env() {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Run { config, out } => {
            let (status, report) = run_config(&config, out.as_deref());
            let json = serde_json::to_string(&report).expect("report serializes");
            if report.status == 0 {
                println!("{json}");
            } else {
                eprintln!("{json}");
            }
            ExitCode::from(status as u8)
        }
        Command::GoldenCheck { results, golden } => match golden_check(&results, &golden) {
            Ok(rep) => {
                println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                if rep.pass() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("{}", serde_json::json!({"kind": "schema", "message": e.to_string()}));
                ExitCode::from(2)
            }
        },
        Command::FreezeGolden { results, golden } => {
            match ResultBundle::read(&results).and_then(|b| GoldenManifest::freeze(&b).write(&golden)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::ListProblems => {
            for p in catalog() {
                println!("{:<16} isaacs={:<5} {}", p.key, p.isaacs, p.summary);
            }
            ExitCode::SUCCESS
        }
        Command::ListSuites => {
            for s in SUITES {
                println!("{s}");
            }
            ExitCode::SUCCESS
        }
        Command::TraceMatrix => match write_trace_csv(std::io::stdout()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
    }
}
