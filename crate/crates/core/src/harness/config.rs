//! Experiment configuration: a TOML-backed record of everything a run
//! depends on, with physical defaults.

use crate::digitizer::{PulseTiming, StageSpan, TimeGrid};
use crate::model::{default_instances, ProblemInstance, Schedule};
use crate::nmrsim::NoiseConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use super::HarnessError;

/// Which annealing instance to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InstanceConfig {
    /// Canonical instance with j12 < 0.
    Neg,
    /// Canonical instance with j12 > 0.
    Pos,
    /// Explicit parameters, quoted in MHz.
    Explicit {
        h1_mhz: f64,
        h2_mhz: f64,
        j12_mhz: f64,
        delta1_mhz: f64,
        delta2_mhz: f64,
        j_nmr_hz: f64,
    },
}

impl InstanceConfig {
    pub fn resolve(&self) -> Result<ProblemInstance, HarnessError> {
        Ok(match self {
            Self::Neg => default_instances().0,
            Self::Pos => default_instances().1,
            Self::Explicit {
                h1_mhz,
                h2_mhz,
                j12_mhz,
                delta1_mhz,
                delta2_mhz,
                j_nmr_hz,
            } => ProblemInstance::from_mhz(
                *h1_mhz,
                *h2_mhz,
                *j12_mhz,
                *delta1_mhz,
                *delta2_mhz,
                *j_nmr_hz,
            )?,
        })
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Neg => "neg".into(),
            Self::Pos => "pos".into(),
            Self::Explicit { j12_mhz, .. } => {
                format!("explicit_j{}", if *j12_mhz < 0.0 { "neg" } else { "pos" })
            }
        }
    }
}

/// Everything one experiment depends on. Serializes to TOML; the
/// compilation-relevant part hashes into the pulse-program cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub monte_carlo_runs: usize,
    pub out_dir: PathBuf,
    pub instance: InstanceConfig,
    pub schedule: Schedule,
    pub grid_stages: Vec<StageSpan>,
    pub noise: NoiseConfig,
    pub timing: PulseTiming,
    /// Gradient values (G/cm) for sweep runs.
    pub sweep: Vec<f64>,
    /// RK4 steps for the classical baseline.
    pub bloch_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = TimeGrid::canonical(Schedule::default().total_time_us);
        Self {
            seed: 20170301,
            monte_carlo_runs: 100,
            out_dir: PathBuf::from("out"),
            instance: InstanceConfig::Neg,
            schedule: Schedule::default(),
            grid_stages: grid.stage_spans().to_vec(),
            noise: NoiseConfig::default(),
            timing: PulseTiming::default(),
            // spans the coherent-to-dephased range of the gradient knob at
            // the default sample length and free-evolution budget
            sweep: vec![0.0, 0.002, 0.01, 0.05, 0.25, 1.0],
            bloch_steps: 40_000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| HarnessError::BadConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.monte_carlo_runs == 0 {
            return Err(HarnessError::BadConfig(
                "monte_carlo_runs must be >= 1".into(),
            ));
        }
        for &g in &self.sweep {
            if !(0.0..=1.0).contains(&g) {
                return Err(HarnessError::BadConfig(format!(
                    "sweep gradient {g} outside [0, 1] G/cm"
                )));
            }
        }
        if self.bloch_steps < crate::blochsim::MIN_STEPS {
            return Err(HarnessError::BadConfig(format!(
                "bloch_steps = {} below the minimum {}",
                self.bloch_steps,
                crate::blochsim::MIN_STEPS
            )));
        }
        self.schedule.validate()?;
        self.noise.validate()?;
        self.instance.resolve()?;
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, HarnessError> {
        Ok(TimeGrid::build(
            self.schedule.total_time_us,
            &self.grid_stages,
        )?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hash of everything the compiled pulse program depends on.
    pub fn compile_key(&self) -> Result<String, HarnessError> {
        #[derive(Serialize)]
        struct Key<'a> {
            instance: &'a ProblemInstance,
            schedule: &'a Schedule,
            grid_stages: &'a [StageSpan],
            timing: &'a PulseTiming,
        }
        let inst = self.instance.resolve()?;
        let key = Key {
            instance: &inst,
            schedule: &self.schedule,
            grid_stages: &self.grid_stages,
            timing: &self.timing,
        };
        let text = toml::to_string(&key).expect("key serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        Ok(hex16(&digest))
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn compile_key_separates_instances_but_ignores_noise() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.instance = InstanceConfig::Pos;
        assert_ne!(a.compile_key().unwrap(), b.compile_key().unwrap());
        let mut c = a.clone();
        c.noise.gradient_g_per_cm = 0.9;
        c.seed = 1;
        c.monte_carlo_runs = 7;
        assert_eq!(a.compile_key().unwrap(), c.compile_key().unwrap());
    }

    #[test]
    fn rejects_out_of_range_sweep_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep = vec![0.0, 1.5];
        assert!(cfg.validate().is_err());
        cfg.sweep = vec![-0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_zero_runs() {
        let mut cfg = ExperimentConfig::default();
        cfg.monte_carlo_runs = 0;
        assert!(cfg.validate().is_err());
    }
}
