//! Single-experiment orchestration: compile (or reuse) the pulse program,
//! replay it through the noisy simulator, integrate the classical
//! baseline, and persist everything as plain-text artifacts.

use crate::blochsim::{integrate_bloch, state_from_magnetization, MagnetizationState};
use crate::digitizer::{
    compile_program, exact_block, expand_to_physical, read_program, write_program,
    PhysicalPulseProgram, PulseBlock, TimeGrid,
};
use crate::model::{ground_scan, ProblemInstance, Schedule};
use crate::nmrsim::{run_protocol, InvariantReport, TrajectoryRecord};
use crate::qmath::{Metrics, Operator, PureState};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::HarnessError;

pub const QUANTUM_CSV: &str = "quantum.csv";
pub const CLASSICAL_CSV: &str = "classical.csv";
pub const IDEAL_CSV: &str = "ideal.csv";
pub const BLOCKS_CSV: &str = "blocks.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Everything produced by one experiment run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub quantum: Vec<TrajectoryRecord>,
    pub classical: Vec<TrajectoryRecord>,
    pub ideal: Vec<TrajectoryRecord>,
    pub blocks: Vec<PulseBlock>,
    pub program: PhysicalPulseProgram,
    pub invariants: InvariantReport,
    pub run_seeds: Vec<u64>,
    pub program_cache_hit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    program_key: String,
    program_cache_hit: bool,
    /// Per-run RNG seeds, hex-encoded (TOML integers are i64-bounded).
    run_seeds: Vec<String>,
    invariants: InvariantReport,
    config: ExperimentConfig,
}

/// Compile the canonical program for the config, reusing a cached copy
/// keyed by the hash of the compilation inputs when one exists.
pub fn compile_cached(
    cfg: &ExperimentConfig,
) -> Result<(Vec<PulseBlock>, PhysicalPulseProgram, bool), HarnessError> {
    let inst = cfg.instance.resolve()?;
    let grid = cfg.grid()?;
    let key = cfg.compile_key()?;
    let cache_dir = cfg.out_dir.join("cache");
    let program_path = cache_dir.join(format!("program-{key}.txt"));
    let blocks_path = cache_dir.join(format!("blocks-{key}.toml"));

    if program_path.exists() && blocks_path.exists() {
        let cached: Result<(Vec<PulseBlock>, PhysicalPulseProgram), HarnessError> = (|| {
            let file = fs::File::open(&program_path)?;
            let (program, _) = read_program(BufReader::new(file), &cfg.timing)?;
            let text = fs::read_to_string(&blocks_path)?;
            let table: BlocksFile = toml::from_str(&text)
                .map_err(|e| HarnessError::BadConfig(format!("blocks cache: {e}")))?;
            Ok((table.blocks, program))
        })();
        match cached {
            Ok((blocks, program)) if program.block_count == grid.steps() => {
                return Ok((blocks, program, true));
            }
            _ => {
                eprintln!("cache entry {key} unreadable or stale; recompiling");
            }
        }
    }

    let compiled = compile_program(&inst, &cfg.schedule, &grid)?;
    let program = expand_to_physical(&compiled.blocks, &cfg.timing);
    fs::create_dir_all(&cache_dir)?;
    let mut buf = Vec::new();
    write_program(&mut buf, &program, inst.j_nmr_hz)?;
    fs::write(&program_path, buf)?;
    let table = BlocksFile {
        blocks: compiled.blocks.clone(),
    };
    fs::write(
        &blocks_path,
        toml::to_string(&table).expect("blocks serialize"),
    )?;
    Ok((compiled.blocks, program, false))
}

#[derive(Serialize, Deserialize)]
struct BlocksFile {
    blocks: Vec<PulseBlock>,
}

/// Noise-free continuous-evolution trajectory on the snapshot grid,
/// computed from fine-sliced exact propagators (no digitization).
pub fn ideal_trajectory(
    inst: &ProblemInstance,
    s: &Schedule,
    grid: &TimeGrid,
) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let boundaries = grid.boundaries();
    let scan = ground_scan(inst, s, boundaries)?;
    let snapshot_ks: Vec<usize> = (0..grid.steps()).filter(|k| k % 3 == 0).collect();
    let mut psi = PureState::minus_minus().amplitudes().clone();
    let mut records = Vec::with_capacity(snapshot_ks.len());
    let mut pos = 0usize;
    for &k in &snapshot_ks {
        while pos < k {
            let (t0, t1) = grid.step(pos);
            let u = exact_block(inst, s, t0, t1)?;
            psi = u.entries() * psi;
            pos += 1;
        }
        let state = PureState::normalized(psi.clone())?;
        let rho = Operator::density_snapshot(state.projector())?;
        let m = Metrics::evaluate(&rho, &scan[k].ground)?;
        records.push(TrajectoryRecord {
            k,
            t_us: boundaries[k],
            fidelity: m.fidelity,
            fidelity_std: 0.0,
            success: m.success,
            success_std: 0.0,
            negativity: m.negativity,
            negativity_std: 0.0,
            purity: m.purity,
            purity_std: 0.0,
        })
    }
    Ok(records)
}

/// Classical Bloch baseline sampled on the snapshot grid. The classical
/// path takes no noise input by construction; error columns are zero.
pub fn classical_trajectory(
    inst: &ProblemInstance,
    s: &Schedule,
    grid: &TimeGrid,
    bloch_steps: usize,
) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let traj = integrate_bloch(inst, s, &MagnetizationState::minus_x(), bloch_steps)?;
    let boundaries = grid.boundaries();
    let scan = ground_scan(inst, s, boundaries)?;
    let snapshot_ks: Vec<usize> = (0..grid.steps()).filter(|k| k % 3 == 0).collect();
    let mut records = Vec::with_capacity(snapshot_ks.len());
    for &k in &snapshot_ks {
        let t = boundaries[k];
        let psi = state_from_magnetization(&traj.state_at(t))?;
        let rho = Operator::density_snapshot(psi.projector())?;
        let m = Metrics::evaluate(&rho, &scan[k].ground)?;
        records.push(TrajectoryRecord {
            k,
            t_us: t,
            fidelity: m.fidelity,
            fidelity_std: 0.0,
            success: m.success,
            success_std: 0.0,
            negativity: m.negativity,
            negativity_std: 0.0,
            purity: m.purity,
            purity_std: 0.0,
        });
    }
    Ok(records)
}

pub fn write_snapshot_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<(), HarnessError> {
    let mut out = String::from(
        "k,t_us,fidelity,fidelity_std,success,success_std,negativity,negativity_std,purity,purity_std\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{:.9},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.k,
            r.t_us,
            r.fidelity,
            r.fidelity_std,
            r.success,
            r.success_std,
            r.negativity,
            r.negativity_std,
            r.purity,
            r.purity_std
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_snapshot_csv(path: &Path) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(HarnessError::BadConfig(format!(
                "{}: line {} has {} fields",
                path.display(),
                i + 1,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64, HarnessError> {
            s.parse()
                .map_err(|_| HarnessError::BadConfig(format!("{}: bad number {s}", path.display())))
        };
        out.push(TrajectoryRecord {
            k: f[0]
                .parse()
                .map_err(|_| HarnessError::BadConfig(format!("bad k in {}", path.display())))?,
            t_us: num(f[1])?,
            fidelity: num(f[2])?,
            fidelity_std: num(f[3])?,
            success: num(f[4])?,
            success_std: num(f[5])?,
            negativity: num(f[6])?,
            negativity_std: num(f[7])?,
            purity: num(f[8])?,
            purity_std: num(f[9])?,
        });
    }
    Ok(out)
}

fn write_blocks_csv(
    path: &Path,
    grid: &TimeGrid,
    blocks: &[PulseBlock],
) -> Result<(), HarnessError> {
    let mut out = String::from(
        "k,t_us,theta1_deg,theta2_deg,theta3_deg,theta4_deg,dt_s,achieved_hs,fidelity_abs,warning\n",
    );
    for (k, b) in blocks.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9e},{:.9e},{:.12},{}\n",
            k,
            grid.boundaries()[k],
            b.theta1_deg,
            b.theta2_deg,
            b.theta3_deg,
            b.theta4_deg,
            b.dt_s,
            b.achieved_hs,
            b.fidelity_abs,
            b.warning
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Run one experiment end to end and write its artifact set.
pub fn run_single(cfg: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    cfg.validate()?;
    let inst = cfg.instance.resolve()?;
    let grid = cfg.grid()?;
    let dir = cfg.out_dir.join(format!(
        "{}-g{:.6}",
        cfg.instance.tag(),
        cfg.noise.gradient_g_per_cm
    ));
    fs::create_dir_all(&dir)?;

    let (blocks, program, cache_hit) = compile_cached(cfg)?;
    let quantum = run_protocol(
        &program,
        &inst,
        &cfg.schedule,
        &grid,
        &cfg.noise,
        cfg.monte_carlo_runs,
        cfg.seed,
    )?;
    let classical = classical_trajectory(&inst, &cfg.schedule, &grid, cfg.bloch_steps)?;
    let ideal = ideal_trajectory(&inst, &cfg.schedule, &grid)?;

    write_snapshot_csv(&dir.join(QUANTUM_CSV), &quantum.records)?;
    write_snapshot_csv(&dir.join(CLASSICAL_CSV), &classical)?;
    write_snapshot_csv(&dir.join(IDEAL_CSV), &ideal)?;
    write_blocks_csv(&dir.join(BLOCKS_CSV), &grid, &blocks)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        program_key: cfg.compile_key()?,
        program_cache_hit: cache_hit,
        run_seeds: quantum
            .run_seeds
            .iter()
            .map(|s| format!("{s:016x}"))
            .collect(),
        invariants: quantum.invariants,
        config: cfg.clone(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        toml::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    Ok(RunArtifacts {
        dir,
        quantum: quantum.records,
        classical,
        ideal,
        blocks,
        program,
        invariants: quantum.invariants,
        run_seeds: quantum.run_seeds,
        program_cache_hit: cache_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.out_dir = dir.to_path_buf();
        cfg.monte_carlo_runs = 2;
        cfg.noise.n_slices = 3;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn ideal_and_classical_have_79_snapshots() {
        let cfg = ExperimentConfig::default();
        let inst = cfg.instance.resolve().unwrap();
        let grid = cfg.grid().unwrap();
        let classical = classical_trajectory(&inst, &cfg.schedule, &grid, cfg.bloch_steps).unwrap();
        assert_eq!(classical.len(), 79);
        assert_eq!(classical[0].k, 0);
        assert_eq!(classical.last().unwrap().k, 234);
        assert!(classical.iter().all(|r| r.fidelity_std == 0.0));
        // the classical construction is a product state: no negativity
        assert!(classical.iter().all(|r| r.negativity.abs() < 1e-9));
        assert!(classical.iter().all(|r| (r.purity - 1.0).abs() < 1e-9));
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("t.csv");
        let records = vec![TrajectoryRecord {
            k: 3,
            t_us: 0.0075,
            fidelity: 0.987654321,
            fidelity_std: 0.001,
            success: 0.9,
            success_std: 0.002,
            negativity: 0.05,
            negativity_std: 0.003,
            purity: 0.97,
            purity_std: 0.004,
        }];
        write_snapshot_csv(&path, &records).unwrap();
        let back = read_snapshot_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].k, 3);
        assert!((back[0].fidelity - records[0].fidelity).abs() < 1e-12);
        assert!((back[0].purity_std - records[0].purity_std).abs() < 1e-12);
    }
}
