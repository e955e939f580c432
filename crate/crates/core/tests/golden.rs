//! Every golden config reruns to its frozen scalars.

use std::fs;
use std::path::{Path, PathBuf};

use sdg_core::experiment::{golden_compare, ExperimentConfig, GoldenManifest, ResultBundle, SUITES};

fn golden_dirs() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    let mut dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    dirs
}

fn run(dir: &Path, edit: impl FnOnce(&mut ExperimentConfig)) -> ResultBundle {
    let mut cfg = ExperimentConfig::load(&dir.join("config.json")).unwrap();
    edit(&mut cfg);
    cfg.validate().unwrap().run().unwrap()
}

#[test]
fn goldens_reproduce() {
    for dir in golden_dirs() {
        let bundle = run(&dir, |_| {});
        assert!(bundle.passed(), "{}: {:?}", dir.display(), bundle.failures());
        let rep = golden_compare(&bundle, &GoldenManifest::read(&dir).unwrap()).unwrap();
        assert!(rep.pass(), "{}: {:?}", dir.display(), rep.diffs);
    }
}

#[test]
fn every_suite_has_a_golden() {
    let mut covered = std::collections::HashSet::new();
    for dir in golden_dirs() {
        let cfg = ExperimentConfig::load(&dir.join("config.json")).unwrap();
        covered.extend(cfg.suites);
    }
    for s in SUITES {
        assert!(covered.contains(s), "suite {s} has no golden file");
    }
}

#[test]
fn lattice_scalars_ignore_thread_count() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden/dpp-cancel-drift");
    let scalars = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&run(&dir, |_| {}).scalars).unwrap())
    };
    assert_eq!(scalars(1), scalars(4));
}

#[test]
fn monte_carlo_seed_change_stays_in_band() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden/dpp-lsmc-one-player");
    let bundle = run(&dir, |c| c.seed += 1000);
    let rep = golden_compare(&bundle, &GoldenManifest::read(&dir).unwrap()).unwrap();
    assert!(rep.pass(), "{:?}", rep.diffs);
}
