//! Figure emission: deterministic SVG plots rebuilt from the plain-text
//! artifacts, so re-running on identical artifacts is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::runner::{read_snapshot_csv, CLASSICAL_CSV, IDEAL_CSV, MANIFEST_FILE, QUANTUM_CSV};
use super::svg::{Plot, Series, PALETTE};
use super::sweep::{read_sweep_csv, SWEEP_CSV};
use super::HarnessError;
use crate::nmrsim::TrajectoryRecord;

/// What was produced and what could not be.
#[derive(Debug, Clone, Default)]
pub struct FigureReport {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

fn xy(records: &[TrajectoryRecord], f: impl Fn(&TrajectoryRecord) -> f64) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.t_us, f(r))).collect()
}

fn errs(records: &[TrajectoryRecord], f: impl Fn(&TrajectoryRecord) -> f64) -> Vec<f64> {
    records.iter().map(|r| f(r)).collect()
}

fn schedule_plot(cfg: &ExperimentConfig) -> Plot {
    let s = &cfg.schedule;
    let n = 600;
    let sample = |f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let t = s.total_time_us * i as f64 / n as f64;
                (t, f(t))
            })
            .collect()
    };
    Plot {
        title: "Annealing schedule envelopes".into(),
        x_label: "t (us)".into(),
        y_label: "envelope".into(),
        series: vec![
            Series::line("Gamma", sample(&|t| s.gamma.eval(t)), PALETTE[0]),
            Series::line("Lambda", sample(&|t| s.lambda.eval(t)), PALETTE[1]),
            Series::line("Omega", sample(&|t| s.omega.eval(t)), PALETTE[2]),
        ],
        y_range: Some((0.0, 1.05)),
        hlines: vec![],
    }
}

fn trajectory_plot(title: &str, q: &[TrajectoryRecord]) -> Plot {
    Plot {
        title: title.into(),
        x_label: "t (us)".into(),
        y_label: "figure of merit".into(),
        series: vec![
            Series::line("fidelity", xy(q, |r| r.fidelity), PALETTE[0])
                .with_err(errs(q, |r| r.fidelity_std))
                .with_markers(),
            Series::line("success", xy(q, |r| r.success), PALETTE[1])
                .with_err(errs(q, |r| r.success_std))
                .with_markers(),
            Series::line("negativity", xy(q, |r| r.negativity), PALETTE[2])
                .with_err(errs(q, |r| r.negativity_std))
                .with_markers(),
            Series::line("purity", xy(q, |r| r.purity), PALETTE[3])
                .with_err(errs(q, |r| r.purity_std))
                .with_markers(),
        ],
        y_range: Some((0.0, 1.05)),
        hlines: vec![],
    }
}

fn ideal_plot(ideal: &[TrajectoryRecord], classical: &[TrajectoryRecord]) -> Plot {
    Plot {
        title: "Noise-free evolution: quantum vs classical".into(),
        x_label: "t (us)".into(),
        y_label: "fidelity / negativity".into(),
        series: vec![
            Series::line("quantum fidelity", xy(ideal, |r| r.fidelity), PALETTE[0]),
            Series::line(
                "classical fidelity",
                xy(classical, |r| r.fidelity),
                PALETTE[1],
            ),
            Series::line(
                "quantum negativity",
                xy(ideal, |r| r.negativity),
                PALETTE[2],
            ),
        ],
        y_range: Some((0.0, 1.05)),
        hlines: vec![],
    }
}

fn hs_plot(blocks: &[(f64, f64)]) -> Plot {
    Plot {
        title: "Per-block Hilbert-Schmidt distance".into(),
        x_label: "t (us)".into(),
        y_label: "||U_k - U_exp||^2".into(),
        series: vec![Series::line("distance^2", blocks.to_vec(), PALETTE[0]).with_markers()],
        y_range: None,
        hlines: vec![],
    }
}

fn sweep_plots(summary: &super::sweep::SweepSummary) -> (Plot, Plot) {
    let g: Vec<f64> = summary.rows.iter().map(|r| r.gradient_g_per_cm).collect();
    let pair = |vals: Vec<f64>| -> Vec<(f64, f64)> { g.iter().cloned().zip(vals).collect() };
    let fid = Plot {
        title: "Time-averaged fidelity and success vs gradient".into(),
        x_label: "gradient (G/cm)".into(),
        y_label: "time average".into(),
        series: vec![
            Series::line(
                "mean fidelity",
                pair(summary.rows.iter().map(|r| r.mean_fidelity).collect()),
                PALETTE[0],
            )
            .with_err(summary.rows.iter().map(|r| r.mean_fidelity_err).collect())
            .with_markers(),
            Series::line(
                "mean success",
                pair(summary.rows.iter().map(|r| r.mean_success).collect()),
                PALETTE[1],
            )
            .with_err(summary.rows.iter().map(|r| r.mean_success_err).collect())
            .with_markers(),
        ],
        y_range: None,
        hlines: vec![
            (
                summary.classical_mean_fidelity,
                "classical fidelity".into(),
                "#555555".into(),
            ),
            (
                summary.classical_mean_success,
                "classical success".into(),
                "#999999".into(),
            ),
        ],
    };
    let neg = Plot {
        title: "Entanglement vs gradient".into(),
        x_label: "gradient (G/cm)".into(),
        y_label: "negativity".into(),
        series: vec![
            Series::line(
                "mean negativity",
                pair(summary.rows.iter().map(|r| r.mean_negativity).collect()),
                PALETTE[2],
            )
            .with_err(summary.rows.iter().map(|r| r.mean_negativity_err).collect())
            .with_markers(),
            Series::line(
                "max negativity",
                pair(summary.rows.iter().map(|r| r.max_negativity).collect()),
                PALETTE[3],
            )
            .with_markers(),
        ],
        y_range: None,
        hlines: vec![],
    };
    (fid, neg)
}

fn read_blocks_csv(path: &Path) -> Result<Vec<(f64, f64)>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let t: f64 = f[1]
            .parse()
            .map_err(|_| HarnessError::BadConfig("bad blocks.csv".into()))?;
        let hs: f64 = f[7]
            .parse()
            .map_err(|_| HarnessError::BadConfig("bad blocks.csv".into()))?;
        out.push((t, hs));
    }
    Ok(out)
}

/// Emit every figure derivable from the artifacts under `root`: per-run
/// directories get trajectory figures, the root gets schedule and sweep
/// figures. Missing artifacts are listed, not fatal.
pub fn emit_figures(root: &Path) -> Result<FigureReport, HarnessError> {
    let mut report = FigureReport::default();
    let write =
        |path: PathBuf, plot: &Plot, report: &mut FigureReport| -> Result<(), HarnessError> {
            fs::write(&path, plot.render())?;
            report.written.push(path);
            Ok(())
        };

    // per-run directories: anything holding a manifest
    let mut run_dirs: Vec<PathBuf> = Vec::new();
    if root.join(MANIFEST_FILE).exists() {
        run_dirs.push(root.to_path_buf());
    }
    if let Ok(entries) = fs::read_dir(root) {
        let mut dirs: Vec<PathBuf> = entries
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_dir() && p.join(MANIFEST_FILE).exists())
            .collect();
        dirs.sort();
        run_dirs.extend(dirs);
    }

    if run_dirs.is_empty() {
        report
            .missing
            .push(format!("no run manifests under {}", root.display()));
    }

    let mut schedule_done = false;
    for dir in &run_dirs {
        let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let cfg: Option<ExperimentConfig> = toml::from_str::<toml::Value>(&manifest_text)
            .ok()
            .and_then(|v| v.get("config").cloned())
            .and_then(|v| v.try_into().ok());
        if let Some(cfg) = &cfg {
            if !schedule_done {
                write(
                    root.join("fig_schedule.svg"),
                    &schedule_plot(cfg),
                    &mut report,
                )?;
                schedule_done = true;
            }
        } else {
            report
                .missing
                .push(format!("unreadable config in {}", dir.display()));
        }

        match read_snapshot_csv(&dir.join(QUANTUM_CSV)) {
            Ok(q) => {
                let name = dir
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .to_string();
                write(
                    dir.join("fig_trajectories.svg"),
                    &trajectory_plot(&format!("Noisy trajectories ({name})"), &q),
                    &mut report,
                )?;
            }
            Err(_) => report
                .missing
                .push(format!("{}/{}", dir.display(), QUANTUM_CSV)),
        }

        match (
            read_snapshot_csv(&dir.join(IDEAL_CSV)),
            read_snapshot_csv(&dir.join(CLASSICAL_CSV)),
        ) {
            (Ok(i), Ok(c)) => {
                write(dir.join("fig_ideal.svg"), &ideal_plot(&i, &c), &mut report)?;
            }
            _ => report.missing.push(format!(
                "{}/{} or {}",
                dir.display(),
                IDEAL_CSV,
                CLASSICAL_CSV
            )),
        }

        match read_blocks_csv(&dir.join(super::runner::BLOCKS_CSV)) {
            Ok(blocks) => {
                write(
                    dir.join("fig_hs_distance.svg"),
                    &hs_plot(&blocks),
                    &mut report,
                )?;
            }
            Err(_) => {
                report
                    .missing
                    .push(format!("{}/{}", dir.display(), super::runner::BLOCKS_CSV))
            }
        }
    }

    match read_sweep_csv(&root.join(SWEEP_CSV)) {
        Ok(summary) => {
            let (fid, neg) = sweep_plots(&summary);
            write(root.join("fig_sweep_fidelity.svg"), &fid, &mut report)?;
            write(root.join("fig_sweep_negativity.svg"), &neg, &mut report)?;
        }
        Err(_) => report
            .missing
            .push(format!("{}", root.join(SWEEP_CSV).display())),
    }

    Ok(report)
}
