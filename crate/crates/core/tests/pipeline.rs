//! End-to-end pipeline tests: artifact persistence, compile caching,
//! manifest-driven reproducibility, figures, and the command-line surface.

use std::fs;
use std::process::Command;

use annealsim::harness::runner::{
    BLOCKS_CSV, CLASSICAL_CSV, IDEAL_CSV, MANIFEST_FILE, QUANTUM_CSV,
};
use annealsim::harness::sweep::SWEEP_CSV;
use annealsim::harness::{emit_figures, run_single, run_sweep, ExperimentConfig};

fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = dir.to_path_buf();
    cfg.monte_carlo_runs = 2;
    cfg.noise.n_slices = 3;
    cfg.noise.gradient_g_per_cm = 0.002;
    cfg.seed = 7;
    cfg
}

#[test]
fn run_single_persists_artifacts_and_reuses_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());

    let first = run_single(&cfg).unwrap();
    assert!(!first.program_cache_hit);
    for f in [
        QUANTUM_CSV,
        CLASSICAL_CSV,
        IDEAL_CSV,
        BLOCKS_CSV,
        MANIFEST_FILE,
    ] {
        assert!(first.dir.join(f).exists(), "missing artifact {f}");
    }
    assert_eq!(first.quantum.len(), 79, "79 snapshot rows expected");
    assert!(first.invariants.clean());
    assert_eq!(first.run_seeds.len(), 2);
    // noiseless-adjacent run still ends near the ground state
    assert!(first.quantum.last().unwrap().fidelity > 0.8);

    // identical config: program comes from cache and every CSV byte matches
    let second = run_single(&cfg).unwrap();
    assert!(
        second.program_cache_hit,
        "second run must reuse the cached program"
    );
    for f in [QUANTUM_CSV, CLASSICAL_CSV, IDEAL_CSV, BLOCKS_CSV] {
        let a = fs::read(first.dir.join(f)).unwrap();
        let b = fs::read(second.dir.join(f)).unwrap();
        assert_eq!(a, b, "{f} not reproducible from the same config");
    }

    // manifest records the config and the per-run seeds
    let manifest = fs::read_to_string(first.dir.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("program_key"));
    assert!(manifest.contains("run_seeds"));
    assert!(manifest.contains("[config.noise]"));
}

#[test]
fn sweep_produces_summary_figures_and_gradient_independent_classical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    cfg.sweep = vec![0.0, 0.05];

    let (summary, artifacts) = run_sweep(&cfg).unwrap();
    assert_eq!(summary.rows.len(), 2);
    for row in &summary.rows {
        assert!(
            row.max_negativity >= row.mean_negativity,
            "max negativity must dominate the mean"
        );
    }
    assert!(cfg.out_dir.join(SWEEP_CSV).exists());

    // the classical baseline never consumes the noise config: byte-equal
    // across gradient members
    let a = fs::read(artifacts[0].dir.join(CLASSICAL_CSV)).unwrap();
    let b = fs::read(artifacts[1].dir.join(CLASSICAL_CSV)).unwrap();
    assert_eq!(a, b, "classical CSV must be gradient-independent");

    // figures: everything derivable is written, re-emission is
    // byte-identical
    let report = emit_figures(&cfg.out_dir).unwrap();
    assert!(report
        .written
        .iter()
        .any(|p| p.ends_with("fig_schedule.svg")));
    assert!(report
        .written
        .iter()
        .any(|p| p.ends_with("fig_sweep_fidelity.svg")));
    assert!(report
        .written
        .iter()
        .any(|p| p.ends_with("fig_sweep_negativity.svg")));
    assert!(report
        .written
        .iter()
        .any(|p| p.ends_with("fig_trajectories.svg")));
    assert!(report.written.iter().any(|p| p.ends_with("fig_ideal.svg")));
    assert!(report
        .written
        .iter()
        .any(|p| p.ends_with("fig_hs_distance.svg")));
    let snapshot: Vec<(std::path::PathBuf, Vec<u8>)> = report
        .written
        .iter()
        .map(|p| (p.clone(), fs::read(p).unwrap()))
        .collect();
    emit_figures(&cfg.out_dir).unwrap();
    for (path, before) in snapshot {
        let after = fs::read(&path).unwrap();
        assert_eq!(before, after, "{} changed on re-emission", path.display());
    }
}

#[test]
fn cli_classical_and_figures_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_annealsim");

    let out = Command::new(bin)
        .args(["classical", "--out"])
        .arg(tmp.path())
        .args(["--instance", "neg"])
        .output()
        .expect("classical verb runs");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("0.981"),
        "classical mean should print 0.981x, got: {stdout}"
    );
    assert!(tmp.path().join("classical-neg.csv").exists());

    let out = Command::new(bin)
        .args(["figures", "--artifacts"])
        .arg(tmp.path())
        .output()
        .expect("figures verb runs");
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("missing:"),
        "empty artifact dir lists missing inputs"
    );
}

#[test]
fn cli_rejects_bad_arguments() {
    let bin = env!("CARGO_BIN_EXE_annealsim");
    let out = Command::new(bin)
        .args(["run", "--instance", "bogus"])
        .output()
        .expect("binary runs");
    assert!(!out.status.success());
}
