//! Gradient sweeps: one run per gradient value, time-averaged summaries,
//! and the comparison against the classical baseline.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use super::runner::{run_single, RunArtifacts};
use super::stats::{trapezoid_mean, trapezoid_mean_err};
use super::HarnessError;
use crate::nmrsim::TrajectoryRecord;

pub const SWEEP_CSV: &str = "sweep.csv";

/// Time-averaged figures of merit for one gradient value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gradient_g_per_cm: f64,
    pub mean_fidelity: f64,
    pub mean_fidelity_err: f64,
    pub mean_success: f64,
    pub mean_success_err: f64,
    pub mean_negativity: f64,
    pub mean_negativity_err: f64,
    pub max_negativity: f64,
    pub final_fidelity: f64,
    pub final_success: f64,
}

/// Sweep table plus the noise-independent classical reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub classical_mean_fidelity: f64,
    pub classical_mean_success: f64,
}

pub fn summarize_trajectory(gradient: f64, records: &[TrajectoryRecord]) -> SweepRow {
    let ts: Vec<f64> = records.iter().map(|r| r.t_us).collect();
    let pick =
        |f: &dyn Fn(&TrajectoryRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let fid = pick(&|r| r.fidelity);
    let fid_e = pick(&|r| r.fidelity_std);
    let suc = pick(&|r| r.success);
    let suc_e = pick(&|r| r.success_std);
    let neg = pick(&|r| r.negativity);
    let neg_e = pick(&|r| r.negativity_std);
    let last = records.last().unwrap();
    SweepRow {
        gradient_g_per_cm: gradient,
        mean_fidelity: trapezoid_mean(&ts, &fid),
        mean_fidelity_err: trapezoid_mean_err(&ts, &fid_e),
        mean_success: trapezoid_mean(&ts, &suc),
        mean_success_err: trapezoid_mean_err(&ts, &suc_e),
        mean_negativity: trapezoid_mean(&ts, &neg),
        mean_negativity_err: trapezoid_mean_err(&ts, &neg_e),
        max_negativity: neg.iter().cloned().fold(0.0, f64::max),
        final_fidelity: last.fidelity,
        final_success: last.success,
    }
}

pub fn write_sweep_csv(path: &Path, summary: &SweepSummary) -> Result<(), HarnessError> {
    let mut out = String::from(
        "gradient_g_per_cm,mean_fidelity,mean_fidelity_err,mean_success,mean_success_err,\
         mean_negativity,mean_negativity_err,max_negativity,final_fidelity,final_success,\
         classical_mean_fidelity,classical_mean_success\n",
    );
    for r in &summary.rows {
        out.push_str(&format!(
            "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.gradient_g_per_cm,
            r.mean_fidelity,
            r.mean_fidelity_err,
            r.mean_success,
            r.mean_success_err,
            r.mean_negativity,
            r.mean_negativity_err,
            r.max_negativity,
            r.final_fidelity,
            r.final_success,
            summary.classical_mean_fidelity,
            summary.classical_mean_success
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepSummary, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut classical = (0.0, 0.0);
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| HarnessError::BadConfig(format!("bad sweep row: {line}")))?;
        if f.len() != 12 {
            return Err(HarnessError::BadConfig(format!(
                "sweep row has {} fields, expected 12",
                f.len()
            )));
        }
        rows.push(SweepRow {
            gradient_g_per_cm: f[0],
            mean_fidelity: f[1],
            mean_fidelity_err: f[2],
            mean_success: f[3],
            mean_success_err: f[4],
            mean_negativity: f[5],
            mean_negativity_err: f[6],
            max_negativity: f[7],
            final_fidelity: f[8],
            final_success: f[9],
        });
        classical = (f[10], f[11]);
    }
    Ok(SweepSummary {
        rows,
        classical_mean_fidelity: classical.0,
        classical_mean_success: classical.1,
    })
}

/// Run every gradient in the config's sweep list. Member artifacts land in
/// per-gradient directories; a member failure aborts the summary while
/// already-written artifacts stay on disk.
pub fn run_sweep(
    cfg: &ExperimentConfig,
) -> Result<(SweepSummary, Vec<RunArtifacts>), HarnessError> {
    cfg.validate()?;
    if cfg.sweep.is_empty() {
        return Err(HarnessError::BadConfig("sweep list is empty".into()));
    }
    let mut artifacts = Vec::with_capacity(cfg.sweep.len());
    let mut rows = Vec::with_capacity(cfg.sweep.len());
    for &g in &cfg.sweep {
        let mut member = cfg.clone();
        member.noise.gradient_g_per_cm = g;
        let art = run_single(&member)?;
        rows.push(summarize_trajectory(g, &art.quantum));
        artifacts.push(art);
    }
    let classical = &artifacts[0].classical;
    let ts: Vec<f64> = classical.iter().map(|r| r.t_us).collect();
    let fid: Vec<f64> = classical.iter().map(|r| r.fidelity).collect();
    let suc: Vec<f64> = classical.iter().map(|r| r.success).collect();
    let summary = SweepSummary {
        rows,
        classical_mean_fidelity: trapezoid_mean(&ts, &fid),
        classical_mean_success: trapezoid_mean(&ts, &suc),
    };
    write_sweep_csv(&cfg.out_dir.join(SWEEP_CSV), &summary)?;
    Ok((summary, artifacts))
}
