//! Two-qubit digitized quantum annealing simulator: schedule construction,
//! Trotterization, pulse compilation into an NMR gate family, noisy
//! density-matrix replay, a classical Bloch baseline, and the fidelity /
//! success / negativity / purity analyses built on top.

pub mod blochsim;
pub mod digitizer;
pub mod harness;
pub mod model;
pub mod nmrsim;
pub mod optim;
pub mod qmath;
