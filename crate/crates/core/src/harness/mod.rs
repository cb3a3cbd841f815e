//! Experiment orchestration: configuration, single runs, gradient sweeps,
//! result persistence and figure emission.

pub mod config;
pub mod figures;
pub mod runner;
pub mod stats;
pub mod svg;
pub mod sweep;

use thiserror::Error;

pub use config::{ExperimentConfig, InstanceConfig};
pub use figures::{emit_figures, FigureReport};
pub use runner::{
    classical_trajectory, compile_cached, ideal_trajectory, run_single, RunArtifacts,
};
pub use sweep::{run_sweep, summarize_trajectory, SweepRow, SweepSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Digitizer(#[from] crate::digitizer::DigitizerError),
    #[error(transparent)]
    Sim(#[from] crate::nmrsim::SimError),
    #[error(transparent)]
    Bloch(#[from] crate::blochsim::BlochError),
    #[error(transparent)]
    Qmath(#[from] crate::qmath::QmathError),
}
