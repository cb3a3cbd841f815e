use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use annealsim::harness::{
    compile_cached, emit_figures, run_single, run_sweep, ExperimentConfig, InstanceConfig,
};

#[derive(Parser)]
#[command(
    name = "annealsim",
    about = "Two-qubit digitized quantum annealing simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Instance selector.
    #[arg(long, value_parser = ["neg", "pos"])]
    instance: Option<String>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile the pulse program for the configured instance.
    Compile(CommonOpts),
    /// Run the noisy simulation plus baselines at one gradient value.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Field gradient in G/cm.
        #[arg(long)]
        gradient: Option<f64>,
        /// Monte-Carlo runs.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run only the classical Bloch baseline.
    Classical(CommonOpts),
    /// Run the full gradient sweep and emit summary figures.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Re-emit figures from existing artifacts.
    Figures {
        /// Artifact directory (a run dir or a sweep root).
        #[arg(long, default_value = "out")]
        artifacts: PathBuf,
    },
}

fn load_config(common: &CommonOpts) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(inst) = &common.instance {
        cfg.instance = match inst.as_str() {
            "neg" => InstanceConfig::Neg,
            "pos" => InstanceConfig::Pos,
            other => bail!("unknown instance {other}"),
        };
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                eprintln!("invariant violations detected; see manifests");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Compile(common) => {
            let cfg = load_config(&common)?;
            let (blocks, program, cache_hit) = compile_cached(&cfg)?;
            let min_fid = blocks
                .iter()
                .map(|b| b.fidelity_abs)
                .fold(f64::INFINITY, f64::min);
            println!(
                "compiled {} blocks ({}) -> {} pulses, free {:.1} ms, rf {:.1} ms, wall {:.1} ms",
                blocks.len(),
                if cache_hit { "cache hit" } else { "fresh" },
                program.pulse_count,
                program.free_time_s * 1e3,
                program.rf_time_s * 1e3,
                program.wall_time_s * 1e3
            );
            println!("min phase-corrected block fidelity: {min_fid:.6}");
            println!(
                "program cache: {}/cache/program-{}.txt",
                cfg.out_dir.display(),
                cfg.compile_key()?
            );
            Ok(true)
        }
        Command::Run {
            common,
            gradient,
            runs,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(g) = gradient {
                cfg.noise.gradient_g_per_cm = g;
            }
            if let Some(r) = runs {
                cfg.monte_carlo_runs = r;
            }
            let art = run_single(&cfg)?;
            let last = art.quantum.last().unwrap();
            println!(
                "run complete: {} snapshots -> {}",
                art.quantum.len(),
                art.dir.display()
            );
            println!(
                "final snapshot k={}: fidelity {:.4} +- {:.4}, success {:.4}, negativity {:.4}",
                last.k, last.fidelity, last.fidelity_std, last.success, last.negativity
            );
            emit_figures(&cfg.out_dir)?;
            Ok(art.invariants.clean())
        }
        Command::Classical(common) => {
            let cfg = load_config(&common)?;
            let inst = cfg.instance.resolve()?;
            let grid = cfg.grid()?;
            let records = annealsim::harness::classical_trajectory(
                &inst,
                &cfg.schedule,
                &grid,
                cfg.bloch_steps,
            )?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg
                .out_dir
                .join(format!("classical-{}.csv", cfg.instance.tag()));
            annealsim::harness::runner::write_snapshot_csv(&path, &records)?;
            let ts: Vec<f64> = records.iter().map(|r| r.t_us).collect();
            let fid: Vec<f64> = records.iter().map(|r| r.fidelity).collect();
            let mean = annealsim::harness::stats::trapezoid_mean(&ts, &fid);
            println!(
                "classical time-average fidelity: {mean:.4} -> {}",
                path.display()
            );
            Ok(true)
        }
        Command::Sweep { common, runs } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = runs {
                cfg.monte_carlo_runs = r;
            }
            let (summary, artifacts) = run_sweep(&cfg)?;
            println!(
                "{:>12} {:>14} {:>14} {:>16} {:>16}",
                "G (G/cm)", "mean fidelity", "mean success", "mean negativity", "max negativity"
            );
            for row in &summary.rows {
                println!(
                    "{:>12.4} {:>14.4} {:>14.4} {:>16.4} {:>16.4}",
                    row.gradient_g_per_cm,
                    row.mean_fidelity,
                    row.mean_success,
                    row.mean_negativity,
                    row.max_negativity
                );
            }
            println!(
                "classical reference: fidelity {:.4}, success {:.4}",
                summary.classical_mean_fidelity, summary.classical_mean_success
            );
            let report = emit_figures(&cfg.out_dir)?;
            println!("figures written: {}", report.written.len());
            Ok(artifacts.iter().all(|a| a.invariants.clean()))
        }
        Command::Figures { artifacts } => {
            let report = emit_figures(&artifacts)?;
            for p in &report.written {
                println!("wrote {}", p.display());
            }
            for m in &report.missing {
                println!("missing: {m}");
            }
            Ok(true)
        }
    }
}
