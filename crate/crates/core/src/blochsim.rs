//! The classical baseline: noise-free Bloch equations for two coupled
//! magnet compasses, integrated with fixed-step RK4, and product-state
//! assignment from the magnetizations.

use crate::model::{ProblemInstance, Schedule};
use crate::qmath::{Matrix2c, PureState, Vector4c, C64};
use thiserror::Error;

/// Per-step norm drift allowed before renormalization.
pub const NORM_DRIFT_BUDGET: f64 = 1e-8;
/// Minimum RK4 step count over [0, T].
pub const MIN_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum BlochError {
    #[error("magnetization vector {0} is not unit length (|M| = {1})")]
    NotUnit(usize, f64),
    #[error("{0} steps is too few to hold the norm-drift budget (max drift {1:.3e})")]
    TooFewSteps(usize, f64),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Qmath(#[from] crate::qmath::QmathError),
}

/// Unit magnetization vectors (Mx, My, Mz) for the two spins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetizationState {
    pub m: [[f64; 3]; 2],
}

impl MagnetizationState {
    /// Both spins along -x: the classical ground state of the easy
    /// Hamiltonian and the default initial condition.
    pub fn minus_x() -> Self {
        Self {
            m: [[-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        }
    }

    pub fn validate(&self) -> Result<(), BlochError> {
        for (i, v) in self.m.iter().enumerate() {
            let n = norm(v);
            if (n - 1.0).abs() > 1e-6 {
                return Err(BlochError::NotUnit(i + 1, n));
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// dM_i/dt = (-Gamma d_i ex - Lambda h_i ez - Omega J12 M_j^z ez) x M_i,
/// with j the partner spin.
pub fn bloch_rhs(
    m: &MagnetizationState,
    t: f64,
    inst: &ProblemInstance,
    s: &Schedule,
) -> Result<[[f64; 3]; 2], BlochError> {
    let (g, l, o) = s.envelopes(t)?;
    let h = [inst.h1, inst.h2];
    let d = [inst.delta1, inst.delta2];
    let mut out = [[0.0; 3]; 2];
    for i in 0..2 {
        let partner = 1 - i;
        let field = [-g * d[i], 0.0, -l * h[i] - o * inst.j12 * m.m[partner][2]];
        out[i] = cross(&field, &m.m[i]);
    }
    Ok(out)
}

/// Magnetization trajectory sampled at uniform times over [0, T].
#[derive(Debug, Clone)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MagnetizationState>,
}

impl BlochTrajectory {
    /// Linear interpolation; the stored grid is dense enough that the
    /// interpolation error is far below the metric tolerances.
    pub fn state_at(&self, t: f64) -> MagnetizationState {
        let t_end = *self.times.last().unwrap();
        let n = self.times.len() - 1;
        let x = (t.clamp(0.0, t_end) / t_end) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        let frac = x - k as f64;
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        let mut m = [[0.0; 3]; 2];
        for i in 0..2 {
            for c in 0..3 {
                m[i][c] = a.m[i][c] * (1.0 - frac) + b.m[i][c] * frac;
            }
            let nn = norm(&m[i]);
            for c in 0..3 {
                m[i][c] /= nn;
            }
        }
        MagnetizationState { m }
    }

    pub fn final_state(&self) -> MagnetizationState {
        *self.states.last().unwrap()
    }
}

/// Fixed-step RK4 over [0, T] with per-step renormalization. Errors when
/// the step count is too small to hold the norm-drift budget.
pub fn integrate_bloch(
    inst: &ProblemInstance,
    s: &Schedule,
    m0: &MagnetizationState,
    n_steps: usize,
) -> Result<BlochTrajectory, BlochError> {
    m0.validate()?;
    let total = s.total_time_us;
    let mut state = *m0;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(state);
    let mut max_drift = 0.0f64;
    for k in 0..n_steps {
        let t = total * k as f64 / n_steps as f64;
        let t_end = total * (k + 1) as f64 / n_steps as f64;
        let h = t_end - t;
        let add = |m: &MagnetizationState, d: &[[f64; 3]; 2], w: f64| MagnetizationState {
            m: [
                [
                    m.m[0][0] + w * d[0][0],
                    m.m[0][1] + w * d[0][1],
                    m.m[0][2] + w * d[0][2],
                ],
                [
                    m.m[1][0] + w * d[1][0],
                    m.m[1][1] + w * d[1][1],
                    m.m[1][2] + w * d[1][2],
                ],
            ],
        };
        let k1 = bloch_rhs(&state, t, inst, s)?;
        let k2 = bloch_rhs(&add(&state, &k1, h / 2.0), t + h / 2.0, inst, s)?;
        let k3 = bloch_rhs(&add(&state, &k2, h / 2.0), t + h / 2.0, inst, s)?;
        let k4 = bloch_rhs(&add(&state, &k3, h), t_end, inst, s)?;
        let mut next = state;
        for i in 0..2 {
            for c in 0..3 {
                next.m[i][c] += h / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
            }
            let n = norm(&next.m[i]);
            max_drift = max_drift.max((n - 1.0).abs());
            for c in 0..3 {
                next.m[i][c] /= n;
            }
        }
        if max_drift > NORM_DRIFT_BUDGET {
            return Err(BlochError::TooFewSteps(n_steps, max_drift));
        }
        state = next;
        times.push(t_end);
        states.push(state);
    }
    Ok(BlochTrajectory { times, states })
}

/// The product pure state whose per-qubit Bloch vectors equal the given
/// magnetizations; the |0> amplitude of each factor is real nonnegative.
pub fn state_from_magnetization(m: &MagnetizationState) -> Result<PureState, BlochError> {
    m.validate()?;
    let qubit = |v: &[f64; 3]| -> Matrix2c {
        let theta = v[2].clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        Matrix2c::new(
            C64::new((theta / 2.0).cos(), 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, phi).exp() * C64::new((theta / 2.0).sin(), 0.0),
            C64::new(0.0, 0.0),
        )
    };
    let a = qubit(&m.m[0]);
    let b = qubit(&m.m[1]);
    let amp = Vector4c::new(
        a[(0, 0)] * b[(0, 0)],
        a[(0, 0)] * b[(1, 0)],
        a[(1, 0)] * b[(0, 0)],
        a[(1, 0)] * b[(1, 0)],
    );
    Ok(PureState::normalized(amp)?)
}
