//! Pulse-level density-matrix replay of a compiled program under gradient
//! dephasing, intrinsic relaxation, pseudo-pure initialization and
//! Monte-Carlo pulse errors.
//!
//! The gradient is modeled as an explicit ensemble of sample slices at
//! fixed z offsets. Each slice keeps its own density matrix for the whole
//! program (molecules do not move between pulses), detuned by gamma * G * z
//! on each nucleus; snapshots average over the ensemble. With every noise
//! source switched off the replay composes to plain unitary conjugation.
//!
//! All channels used here are unital, so the identity part of a
//! pseudo-pure state is invariant and metrics are computed directly on the
//! deviation state |--><--| with the pseudo-pure weight normalized out.

use crate::digitizer::{PhysicalPulseProgram, ProgramEvent, PulseEvent, TimeGrid, XyAxis};
use crate::model::{ground_scan, ProblemInstance, Schedule};
use crate::qmath::{self, kron2, Matrix2c, Matrix4c, Metrics, Operator, PureState, C64};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid noise config: {0}")]
    BadConfig(String),
    #[error("z-axis pulses must be expanded into xy pulses upstream")]
    ZAxisPulse,
    #[error("program has {program} blocks but the grid has {grid} steps")]
    SnapshotMisalignment { program: usize, grid: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Qmath(#[from] qmath::QmathError),
}

/// Noise and hardware parameters of the replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Field gradient in G/cm; the tunable noise knob.
    pub gradient_g_per_cm: f64,
    /// Sample length along z, cm.
    pub sample_length_cm: f64,
    /// Gyromagnetic ratios, rad/(s G).
    pub gamma_h: f64,
    pub gamma_c: f64,
    /// Number of z slices in the dephasing ensemble (odd).
    pub n_slices: usize,
    /// Relaxation time constants, seconds.
    pub t1_h_s: f64,
    pub t2_h_s: f64,
    pub t1_c_s: f64,
    pub t2_c_s: f64,
    /// Pseudo-pure weight.
    pub epsilon: f64,
    /// Monte-Carlo pulse-angle jitter, degrees (std).
    pub pulse_angle_sigma_deg: f64,
    /// Monte-Carlo free-evolution duration jitter, seconds (std).
    pub dt_sigma_s: f64,
    pub relaxation_enabled: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gradient_g_per_cm: 0.0,
            sample_length_cm: 2.0,
            gamma_h: 2.675e4,
            gamma_c: 2.675e4 / 4.0,
            n_slices: 101,
            t1_h_s: 7.4,
            t2_h_s: 0.245,
            t1_c_s: 11.3,
            t2_c_s: 0.157,
            epsilon: 1e-5,
            pulse_angle_sigma_deg: 1.0,
            dt_sigma_s: 10e-9,
            relaxation_enabled: true,
        }
    }
}

impl NoiseConfig {
    /// A configuration with every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            gradient_g_per_cm: 0.0,
            n_slices: 1,
            epsilon: 1.0,
            pulse_angle_sigma_deg: 0.0,
            dt_sigma_s: 0.0,
            relaxation_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.gradient_g_per_cm < 0.0 {
            return Err(SimError::BadConfig("gradient must be nonnegative".into()));
        }
        if self.n_slices == 0 || self.n_slices % 2 == 0 {
            return Err(SimError::BadConfig(format!(
                "n_slices must be odd and positive, got {}",
                self.n_slices
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SimError::BadConfig(format!(
                "epsilon = {} outside [0,1]",
                self.epsilon
            )));
        }
        for (t1, t2, nuc) in [
            (self.t1_h_s, self.t2_h_s, "H"),
            (self.t1_c_s, self.t2_c_s, "C"),
        ] {
            if t1 <= 0.0 || t2 <= 0.0 {
                return Err(SimError::BadConfig(format!("nonpositive T1/T2 for {nuc}")));
            }
            if t2 > 2.0 * t1 {
                return Err(SimError::BadConfig(format!(
                    "T2 = {t2} exceeds 2 T1 = {} for {nuc}",
                    2.0 * t1
                )));
            }
        }
        if self.sample_length_cm <= 0.0 {
            return Err(SimError::BadConfig("sample length must be positive".into()));
        }
        Ok(())
    }

    /// Symmetric slice offsets spanning [-L/2, L/2].
    pub fn slice_offsets(&self) -> Vec<f64> {
        let n = self.n_slices;
        if n == 1 {
            return vec![0.0];
        }
        (0..n)
            .map(|j| {
                -self.sample_length_cm / 2.0 + self.sample_length_cm * j as f64 / (n - 1) as f64
            })
            .collect()
    }
}

/// The pseudo-pure state (1-eps)/4 I + eps |--><--|.
pub fn initial_state(cfg: &NoiseConfig) -> Result<Operator, SimError> {
    cfg.validate()?;
    let m = Matrix4c::identity() * C64::new((1.0 - cfg.epsilon) / 4.0, 0.0)
        + PureState::minus_minus().projector() * C64::new(cfg.epsilon, 0.0);
    Ok(Operator::density(m)?)
}

fn rotation2(axis: XyAxis, angle_rad: f64) -> Matrix2c {
    match axis {
        XyAxis::X => crate::digitizer::rx(angle_rad),
        XyAxis::Y => crate::digitizer::ry(angle_rad),
    }
}

fn rotation4(qubit: usize, axis: XyAxis, angle_rad: f64) -> Matrix4c {
    let r = rotation2(axis, angle_rad);
    let id = Matrix2c::identity();
    if qubit == 1 {
        kron2(&r, &id)
    } else {
        kron2(&id, &r)
    }
}

/// Conjugate rho by the single-qubit rotation, with the angle perturbed by
/// a Gaussian draw of std `pulse_angle_sigma_deg`.
pub fn apply_pulse<R: Rng>(
    rho: &Operator,
    qubit: usize,
    axis: qmath::Axis,
    angle_deg: f64,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<Operator, SimError> {
    let axis = match axis {
        qmath::Axis::X => XyAxis::X,
        qmath::Axis::Y => XyAxis::Y,
        qmath::Axis::Z => return Err(SimError::ZAxisPulse),
    };
    if qubit != 1 && qubit != 2 {
        return Err(SimError::Qmath(qmath::QmathError::InvalidQubit(qubit)));
    }
    let angle = draw_angle_rad(angle_deg, cfg, rng);
    let u = rotation4(qubit, axis, angle);
    Ok(Operator::density_snapshot(u * rho.entries() * u.adjoint())?)
}

fn draw_angle_rad<R: Rng>(angle_deg: f64, cfg: &NoiseConfig, rng: &mut R) -> f64 {
    let deg = if cfg.pulse_angle_sigma_deg > 0.0 {
        Normal::new(angle_deg, cfg.pulse_angle_sigma_deg)
            .unwrap()
            .sample(rng)
    } else {
        angle_deg
    };
    deg.to_radians()
}

fn draw_dt_s<R: Rng>(dt_s: f64, cfg: &NoiseConfig, rng: &mut R) -> f64 {
    if cfg.dt_sigma_s > 0.0 {
        Normal::new(dt_s, cfg.dt_sigma_s)
            .unwrap()
            .sample(rng)
            .max(0.0)
    } else {
        dt_s
    }
}

/// Diagonal phases of free evolution for one slice: scalar coupling plus
/// the z-gradient detuning of both nuclei at offset z.
fn free_phases(inst: &ProblemInstance, cfg: &NoiseConfig, z_cm: f64, dt_s: f64) -> [C64; 4] {
    let j_term = PI * inst.j_nmr_hz / 2.0;
    let det_h = cfg.gamma_h * cfg.gradient_g_per_cm * z_cm;
    let det_c = cfg.gamma_c * cfg.gradient_g_per_cm * z_cm;
    let mut out = [C64::new(0.0, 0.0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let s1 = if k & 2 == 0 { 1.0 } else { -1.0 };
        let s2 = if k & 1 == 0 { 1.0 } else { -1.0 };
        let energy = j_term * s1 * s2 + det_h * s1 + det_c * s2;
        *slot = C64::new(0.0, -energy * dt_s).exp();
    }
    out
}

fn conjugate_diagonal(rho: &mut Matrix4c, phases: &[C64; 4]) {
    for i in 0..4 {
        for j in 0..4 {
            rho[(i, j)] *= phases[i] * phases[j].conj();
        }
    }
}

/// Per-qubit relaxation toward the maximally mixed state: longitudinal
/// mixing at rate 1/T1 and total transverse decay at rate 1/T2.
fn relax_qubit(rho: &mut Matrix4c, qubit: usize, lambda: f64, transverse: f64) {
    let t = C64::new(transverse, 0.0);
    let half = lambda / 2.0;
    if qubit == 1 {
        for b in 0..2 {
            for bp in 0..2 {
                let d0 = rho[(b, bp)];
                let d1 = rho[(2 + b, 2 + bp)];
                rho[(b, bp)] = d0 * C64::new(1.0 - half, 0.0) + d1 * C64::new(half, 0.0);
                rho[(2 + b, 2 + bp)] = d1 * C64::new(1.0 - half, 0.0) + d0 * C64::new(half, 0.0);
                let c01 = rho[(b, 2 + bp)];
                let c10 = rho[(2 + b, bp)];
                rho[(b, 2 + bp)] = c01 * t;
                rho[(2 + b, bp)] = c10 * t;
            }
        }
    } else {
        for a in 0..2 {
            for ap in 0..2 {
                let (r, c) = (2 * a, 2 * ap);
                let d0 = rho[(r, c)];
                let d1 = rho[(r + 1, c + 1)];
                rho[(r, c)] = d0 * C64::new(1.0 - half, 0.0) + d1 * C64::new(half, 0.0);
                rho[(r + 1, c + 1)] = d1 * C64::new(1.0 - half, 0.0) + d0 * C64::new(half, 0.0);
                let c01 = rho[(r, c + 1)];
                let c10 = rho[(r + 1, c)];
                rho[(r, c + 1)] = c01 * t;
                rho[(r + 1, c)] = c10 * t;
            }
        }
    }
}

fn apply_relaxation(rho: &mut Matrix4c, cfg: &NoiseConfig, dt_s: f64) {
    let lam_h = 1.0 - (-dt_s / cfg.t1_h_s).exp();
    let lam_c = 1.0 - (-dt_s / cfg.t1_c_s).exp();
    let f_h = (-dt_s / cfg.t2_h_s).exp();
    let f_c = (-dt_s / cfg.t2_c_s).exp();
    relax_qubit(rho, 1, lam_h, f_h);
    relax_qubit(rho, 2, lam_c, f_c);
}

/// The single-event free-evolution channel: evolve each slice of the
/// ensemble from the same input state, relax, and average.
pub fn free_evolve<R: Rng>(
    rho: &Operator,
    dt_s: f64,
    inst: &ProblemInstance,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<Operator, SimError> {
    cfg.validate()?;
    let dt = draw_dt_s(dt_s, cfg, rng);
    let mut avg = Matrix4c::zeros();
    let offsets = cfg.slice_offsets();
    for &z in &offsets {
        let mut slice = *rho.entries();
        conjugate_diagonal(&mut slice, &free_phases(inst, cfg, z, dt));
        if cfg.relaxation_enabled {
            apply_relaxation(&mut slice, cfg, dt);
        }
        avg += slice;
    }
    avg /= C64::new(offsets.len() as f64, 0.0);
    Ok(Operator::density_snapshot(avg)?)
}

/// One row of the snapshot table: run-aggregated metrics with Monte-Carlo
/// standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub t_us: f64,
    pub fidelity: f64,
    pub fidelity_std: f64,
    pub success: f64,
    pub success_std: f64,
    pub negativity: f64,
    pub negativity_std: f64,
    pub purity: f64,
    pub purity_std: f64,
}

/// Numerical health counters accumulated over every event of every run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub max_trace_dev: f64,
    pub min_snapshot_eigenvalue: f64,
    pub trace_violations: usize,
    pub positivity_violations: usize,
}

impl InvariantReport {
    pub fn merge(&mut self, other: &InvariantReport) {
        self.max_trace_dev = self.max_trace_dev.max(other.max_trace_dev);
        self.min_snapshot_eigenvalue = self
            .min_snapshot_eigenvalue
            .min(other.min_snapshot_eigenvalue);
        self.trace_violations += other.trace_violations;
        self.positivity_violations += other.positivity_violations;
    }

    pub fn clean(&self) -> bool {
        self.trace_violations == 0 && self.positivity_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    /// Per-run RNG seeds, recorded for reproducibility.
    pub run_seeds: Vec<u64>,
    pub invariants: InvariantReport,
}

struct SingleRun {
    metrics: Vec<Metrics>,
    invariants: InvariantReport,
}

fn simulate_one_run(
    program: &PhysicalPulseProgram,
    inst: &ProblemInstance,
    cfg: &NoiseConfig,
    grounds: &[(usize, f64, PureState)],
    by_block: &[Vec<ProgramEvent>],
    seed: u64,
) -> Result<SingleRun, SimError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let offsets = cfg.slice_offsets();
    let init = PureState::minus_minus().projector();
    let mut slices: Vec<Matrix4c> = vec![init; offsets.len()];
    let mut inv = InvariantReport::default();
    let mut metrics = Vec::with_capacity(grounds.len());
    let mut next_snapshot = 0usize;

    let check_traces = |slices: &[Matrix4c], inv: &mut InvariantReport| {
        for s in slices {
            let dev = (s.trace() - C64::new(1.0, 0.0)).norm();
            inv.max_trace_dev = inv.max_trace_dev.max(dev);
            if dev >= 1e-9 {
                inv.trace_violations += 1;
            }
        }
    };

    for block in 0..program.block_count {
        if next_snapshot < grounds.len() && grounds[next_snapshot].0 == block {
            let (_, _, ref target) = grounds[next_snapshot];
            let mut avg = Matrix4c::zeros();
            for s in &slices {
                avg += s;
            }
            avg /= C64::new(slices.len() as f64, 0.0);
            let rho = Operator::density_snapshot(avg)?;
            let (evals, _) = qmath::eigh(rho.entries());
            inv.min_snapshot_eigenvalue = inv.min_snapshot_eigenvalue.min(evals[0]);
            if evals[0] < -1e-8 {
                inv.positivity_violations += 1;
            }
            metrics.push(Metrics::evaluate(&rho, target)?);
            next_snapshot += 1;
        }
        for ev in &by_block[block] {
            match ev.event {
                PulseEvent::Rotation {
                    qubit,
                    axis,
                    angle_deg,
                } => {
                    let angle = draw_angle_rad(angle_deg, cfg, &mut rng);
                    let u = rotation4(qubit, axis, angle);
                    let ud = u.adjoint();
                    for s in slices.iter_mut() {
                        *s = u * *s * ud;
                    }
                }
                PulseEvent::FreeEvolution { dt_s } => {
                    let dt = draw_dt_s(dt_s, cfg, &mut rng);
                    for (s, &z) in slices.iter_mut().zip(offsets.iter()) {
                        conjugate_diagonal(s, &free_phases(inst, cfg, z, dt));
                        if cfg.relaxation_enabled {
                            apply_relaxation(s, cfg, dt);
                        }
                    }
                }
            }
            check_traces(&slices, &mut inv);
        }
    }
    // snapshot at a final index equal to the block count never occurs:
    // the last recorded index is 234 for the canonical 235-step program
    Ok(SingleRun {
        metrics,
        invariants: inv,
    })
}

/// Replay the compiled program `runs` times and aggregate the snapshot
/// metrics. Snapshot k records the state after k blocks, at the grid
/// boundary time t_k, for every k divisible by 3.
pub fn run_protocol(
    program: &PhysicalPulseProgram,
    inst: &ProblemInstance,
    s: &Schedule,
    grid: &TimeGrid,
    cfg: &NoiseConfig,
    runs: usize,
    master_seed: u64,
) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    if runs == 0 {
        return Err(SimError::BadConfig("runs must be >= 1".into()));
    }
    if program.block_count != grid.steps() {
        return Err(SimError::SnapshotMisalignment {
            program: program.block_count,
            grid: grid.steps(),
        });
    }

    let boundaries = grid.boundaries();
    let scan = ground_scan(inst, s, boundaries)?;
    let snapshot_ks: Vec<usize> = (0..grid.steps()).filter(|k| k % 3 == 0).collect();
    let grounds: Vec<(usize, f64, PureState)> = snapshot_ks
        .iter()
        .map(|&k| (k, boundaries[k], scan[k].ground.clone()))
        .collect();

    let mut by_block: Vec<Vec<ProgramEvent>> = vec![Vec::new(); program.block_count];
    for e in &program.events {
        by_block[e.block].push(*e);
    }

    let mut seed_rng = ChaCha12Rng::seed_from_u64(master_seed);
    let run_seeds: Vec<u64> = (0..runs).map(|_| seed_rng.gen()).collect();

    let results: Result<Vec<SingleRun>, SimError> = run_seeds
        .par_iter()
        .map(|&seed| simulate_one_run(program, inst, cfg, &grounds, &by_block, seed))
        .collect();
    let results = results?;

    let mut invariants = InvariantReport::default();
    for r in &results {
        invariants.merge(&r.invariants);
    }

    let n = runs as f64;
    let records = grounds
        .iter()
        .enumerate()
        .map(|(i, &(k, t_us, _))| {
            let pull = |f: &dyn Fn(&Metrics) -> f64| -> (f64, f64) {
                let vals: Vec<f64> = results.iter().map(|r| f(&r.metrics[i])).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let std = if runs > 1 {
                    (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                (mean, std)
            };
            let (fidelity, fidelity_std) = pull(&|m: &Metrics| m.fidelity);
            let (success, success_std) = pull(&|m: &Metrics| m.success);
            let (negativity, negativity_std) = pull(&|m: &Metrics| m.negativity);
            let (purity, purity_std) = pull(&|m: &Metrics| m.purity);
            TrajectoryRecord {
                k,
                t_us,
                fidelity,
                fidelity_std,
                success,
                success_std,
                negativity,
                negativity_std,
                purity,
                purity_std,
            }
        })
        .collect();

    Ok(RunOutput {
        records,
        run_seeds,
        invariants,
    })
}
