//! Problem instances, annealing schedules, the time-dependent Hamiltonian
//! and its spectrum (instantaneous ground state, gap).
//!
//! All frequency-like parameters are stored as angular frequencies in
//! rad/us, so that omega * t products with time in microseconds need no
//! further conversion. Quoted megahertz values v enter as 2*pi*v; this
//! reading is pinned by the classical-baseline calibration (see the
//! blochsim tests and the acceptance suite).

use crate::qmath::{self, Axis, Matrix4c, Operator, PureState, C64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// rad/us per quoted MHz.
pub const UNIT_FACTOR: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("time {t} us outside the schedule range [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("transverse field delta{0} must be positive, got {1}")]
    NonPositiveDelta(usize, f64),
    #[error("schedule violates boundary conditions: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Qmath(#[from] qmath::QmathError),
}

/// Annealing problem parameters, as angular frequencies in rad/us, plus the
/// scalar coupling of the simulating hardware in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub h1: f64,
    pub h2: f64,
    pub j12: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub j_nmr_hz: f64,
}

impl ProblemInstance {
    /// Build from quoted megahertz values (applies [`UNIT_FACTOR`]).
    pub fn from_mhz(
        h1: f64,
        h2: f64,
        j12: f64,
        delta1: f64,
        delta2: f64,
        j_nmr_hz: f64,
    ) -> Result<Self, ModelError> {
        if delta1 <= 0.0 {
            return Err(ModelError::NonPositiveDelta(1, delta1));
        }
        if delta2 <= 0.0 {
            return Err(ModelError::NonPositiveDelta(2, delta2));
        }
        Ok(Self {
            h1: h1 * UNIT_FACTOR,
            h2: h2 * UNIT_FACTOR,
            j12: j12 * UNIT_FACTOR,
            delta1: delta1 * UNIT_FACTOR,
            delta2: delta2 * UNIT_FACTOR,
            j_nmr_hz,
        })
    }

    pub fn j12_mhz(&self) -> f64 {
        self.j12 / UNIT_FACTOR
    }

    /// Uniformly rescale all angular frequencies (unit-consistency checks).
    pub fn scaled(&self, kappa: f64) -> Self {
        Self {
            h1: self.h1 * kappa,
            h2: self.h2 * kappa,
            j12: self.j12 * kappa,
            delta1: self.delta1 * kappa,
            delta2: self.delta2 * kappa,
            j_nmr_hz: self.j_nmr_hz,
        }
    }

    /// Diagonal Ising energy of basis state |k1 k2>, k = 2*k1 + k2.
    pub fn ising_energy(&self, k: usize) -> f64 {
        let s1 = if k & 2 == 0 { 1.0 } else { -1.0 };
        let s2 = if k & 1 == 0 { 1.0 } else { -1.0 };
        self.h1 * s1 + self.h2 * s2 + self.j12 * s1 * s2
    }

    /// Brute-force minimizer of the diagonal Ising energies over the four
    /// basis assignments.
    pub fn ising_ground_index(&self) -> usize {
        (0..4)
            .min_by(|&a, &b| {
                self.ising_energy(a)
                    .partial_cmp(&self.ising_energy(b))
                    .unwrap()
            })
            .unwrap()
    }
}

/// The two canonical instances; they differ only in the sign of j12.
pub fn default_instances() -> (ProblemInstance, ProblemInstance) {
    let neg = ProblemInstance::from_mhz(62.5, 15.625, -53.75, 28.125, 15.625, 215.0).unwrap();
    let pos = ProblemInstance::from_mhz(62.5, 15.625, 53.75, 28.125, 15.625, 215.0).unwrap();
    (neg, pos)
}

/// One tanh envelope: (1 + sign * tanh((t - center)/width)) / 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sign: f64,
    pub center_us: f64,
    pub width_us: f64,
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        (1.0 + self.sign * ((t - self.center_us) / self.width_us).tanh()) / 2.0
    }
}

/// The three envelope functions and the total protocol time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma: Envelope,
    pub lambda: Envelope,
    pub omega: Envelope,
    pub total_time_us: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            gamma: Envelope {
                sign: -1.0,
                center_us: 0.3,
                width_us: 0.01,
            },
            lambda: Envelope {
                sign: 1.0,
                center_us: 0.3,
                width_us: 0.075,
            },
            omega: Envelope {
                sign: 1.0,
                center_us: 0.2,
                width_us: 0.06,
            },
            total_time_us: 0.6,
        }
    }
}

impl Schedule {
    /// Boundary conditions: Gamma starts on and ends off, Lambda and Omega
    /// agree at the end.
    pub fn validate(&self) -> Result<(), ModelError> {
        let t_end = self.total_time_us;
        if self.gamma.eval(0.0) <= 0.99 {
            return Err(ModelError::BadSchedule(format!(
                "Gamma(0) = {} <= 0.99",
                self.gamma.eval(0.0)
            )));
        }
        if self.gamma.eval(t_end) >= 0.01 {
            return Err(ModelError::BadSchedule(format!(
                "Gamma(T) = {} >= 0.01",
                self.gamma.eval(t_end)
            )));
        }
        let mismatch = (self.lambda.eval(t_end) - self.omega.eval(t_end)).abs();
        if mismatch > 1e-3 {
            return Err(ModelError::BadSchedule(format!(
                "|Lambda(T) - Omega(T)| = {mismatch:.2e} > 1e-3"
            )));
        }
        Ok(())
    }

    /// (Gamma, Lambda, Omega) at time t; errors outside [0, T].
    pub fn envelopes(&self, t: f64) -> Result<(f64, f64, f64), ModelError> {
        if !(0.0..=self.total_time_us).contains(&t) {
            return Err(ModelError::TimeOutOfRange {
                t,
                total: self.total_time_us,
            });
        }
        Ok((self.gamma.eval(t), self.lambda.eval(t), self.omega.eval(t)))
    }
}

/// H(t) = Gamma (d1 sx1 + d2 sx2) + Lambda (h1 sz1 + h2 sz2) + Omega j12 sz1 sz2.
pub fn hamiltonian_at(
    inst: &ProblemInstance,
    s: &Schedule,
    t: f64,
) -> Result<Operator, ModelError> {
    let (g, l, o) = s.envelopes(t)?;
    Ok(Operator::hermitian(hamiltonian_raw(inst, g, l, o))?)
}

pub fn hamiltonian_raw(inst: &ProblemInstance, g: f64, l: f64, o: f64) -> Matrix4c {
    let sx1 = qmath::pauli(Axis::X, 1).unwrap();
    let sx2 = qmath::pauli(Axis::X, 2).unwrap();
    let sz1 = qmath::pauli(Axis::Z, 1).unwrap();
    let sz2 = qmath::pauli(Axis::Z, 2).unwrap();
    let szz = sz1.entries() * sz2.entries();
    let r = |x: f64| C64::new(x, 0.0);
    sx1.entries() * r(g * inst.delta1)
        + sx2.entries() * r(g * inst.delta2)
        + sz1.entries() * r(l * inst.h1)
        + sz2.entries() * r(l * inst.h2)
        + szz * r(o * inst.j12)
}

/// Full spectrum at one time: energies ascending, phase-fixed ground state,
/// spectral gap.
#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub t_us: f64,
    pub energies: [f64; 4],
    pub ground: PureState,
    pub gap: f64,
    pub degenerate: bool,
}

/// Phase convention: the largest-magnitude amplitude is made real positive;
/// ties broken toward the smallest basis index among maximal components.
fn phase_fix(v: &mut crate::qmath::Vector4c) {
    let mut best = 0;
    for k in 1..4 {
        if v[k].norm() > v[best].norm() + 1e-12 {
            best = k;
        }
    }
    let a = v[best];
    if a.norm() > 0.0 {
        let phase = a / C64::new(a.norm(), 0.0);
        for k in 0..4 {
            v[k] /= phase;
        }
    }
}

pub fn spectrum_at(
    inst: &ProblemInstance,
    s: &Schedule,
    t: f64,
) -> Result<SpectralPoint, ModelError> {
    let h = hamiltonian_at(inst, s, t)?;
    let (energies, vecs) = qmath::eigh(h.entries());
    let mut ground = vecs.column(0).into_owned();
    phase_fix(&mut ground);
    let gap = energies[1] - energies[0];
    let scale = energies.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    Ok(SpectralPoint {
        t_us: t,
        energies,
        ground: PureState::normalized(ground)?,
        gap,
        degenerate: gap < 1e-9 * scale.max(1e-300),
    })
}

/// Spectrum along a time scan with the ground-state sign kept continuous:
/// each eigenvector is flipped when that raises its overlap with the
/// previous point's ground state.
pub fn ground_scan(
    inst: &ProblemInstance,
    s: &Schedule,
    times: &[f64],
) -> Result<Vec<SpectralPoint>, ModelError> {
    let mut out: Vec<SpectralPoint> = Vec::with_capacity(times.len());
    for &t in times {
        let mut p = spectrum_at(inst, s, t)?;
        if let Some(prev) = out.last() {
            let ov = (prev.ground.amplitudes().adjoint() * p.ground.amplitudes())[(0, 0)];
            if ov.re < 0.0 {
                p.ground = PureState::normalized(-p.ground.amplitudes())?;
            }
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_instances_match_quoted_values() {
        let (neg, pos) = default_instances();
        assert_abs_diff_eq!(neg.j12_mhz(), -53.75, epsilon = 1e-12);
        assert_abs_diff_eq!(pos.j12_mhz(), 53.75, epsilon = 1e-12);
        assert_abs_diff_eq!(neg.h2, pos.h2, epsilon = 0.0);
        assert_abs_diff_eq!(neg.delta2, neg.h2, epsilon = 1e-12);
        assert_abs_diff_eq!(neg.h2 / UNIT_FACTOR, 15.625, epsilon = 1e-12);
        assert_abs_diff_eq!(neg.j_nmr_hz, 215.0, epsilon = 0.0);
        // canonical instances are nondegenerate
        for inst in [neg, pos] {
            assert!((inst.h1.abs() - inst.h2.abs()).abs() > 1e-9);
            assert!((inst.h2.abs() - inst.j12.abs()).abs() > 1e-9);
        }
    }

    #[test]
    fn rejects_non_positive_transverse_field() {
        assert!(ProblemInstance::from_mhz(1.0, 1.0, 1.0, 0.0, 1.0, 215.0).is_err());
        assert!(ProblemInstance::from_mhz(1.0, 1.0, 1.0, 1.0, -2.0, 215.0).is_err());
    }

    #[test]
    fn envelope_midpoints() {
        let s = Schedule::default();
        let (g, _, _) = s.envelopes(0.3).unwrap();
        assert_abs_diff_eq!(g, 0.5, epsilon = 1e-14);
        let (_, _, o) = s.envelopes(0.2).unwrap();
        assert_abs_diff_eq!(o, 0.5, epsilon = 1e-14);
        let (_, l, _) = s.envelopes(0.3).unwrap();
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn gamma_is_negligible_at_end() {
        let s = Schedule::default();
        let (g, _, _) = s.envelopes(0.6).unwrap();
        assert!(g < 1e-10);
        s.validate().unwrap();
    }

    #[test]
    fn envelopes_reject_out_of_range_times() {
        let s = Schedule::default();
        assert!(s.envelopes(-0.01).is_err());
        assert!(s.envelopes(0.61).is_err());
    }

    #[test]
    fn hamiltonian_is_traceless_and_hermitian() {
        let (neg, _) = default_instances();
        let s = Schedule::default();
        for &t in &[0.0, 0.17, 0.3, 0.45, 0.6] {
            let h = hamiltonian_at(&neg, &s, t).unwrap();
            assert!(h.entries().trace().norm() < 1e-12);
            let dev = qmath::max_abs(&(h.entries().adjoint() - h.entries()));
            assert!(dev < 1e-12);
        }
    }

    #[test]
    fn initial_ground_state_is_nearly_minus_minus() {
        let (neg, pos) = default_instances();
        let s = Schedule::default();
        for inst in [neg, pos] {
            let p = spectrum_at(&inst, &s, 0.0).unwrap();
            let ov = p.ground.overlap(&PureState::minus_minus());
            assert!(ov * ov >= 0.999, "overlap^2 = {}", ov * ov);
        }
    }

    #[test]
    fn final_hamiltonian_is_effectively_diagonal() {
        let (neg, _) = default_instances();
        let s = Schedule::default();
        let h = hamiltonian_at(&neg, &s, 0.6).unwrap();
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let v = h.entries()[(i, j)].norm();
                if i == j {
                    diag = diag.max(v);
                } else {
                    off = off.max(v);
                }
            }
        }
        assert!(off / diag < 1e-6);
    }

    #[test]
    fn final_ground_state_is_the_ising_minimizer() {
        let (neg, pos) = default_instances();
        let s = Schedule::default();
        // j12 < 0: minimizer |11> (k=3); j12 > 0: |10> (k=2)
        assert_eq!(neg.ising_ground_index(), 3);
        assert_eq!(pos.ising_ground_index(), 2);
        for inst in [neg, pos] {
            let p = spectrum_at(&inst, &s, s.total_time_us).unwrap();
            let k = inst.ising_ground_index();
            let ov = p.ground.overlap(&PureState::basis(k));
            assert!(ov > 0.999999, "overlap = {ov}");
        }
    }

    #[test]
    fn gap_stays_open_and_scan_is_continuous() {
        let (neg, pos) = default_instances();
        let s = Schedule::default();
        let times: Vec<f64> = (0..1000).map(|k| 0.6 * k as f64 / 999.0).collect();
        for inst in [neg, pos] {
            let scan = ground_scan(&inst, &s, &times).unwrap();
            let min_gap = scan.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
            assert!(min_gap > 0.0);
            assert!(scan.iter().all(|p| !p.degenerate));
            for w in scan.windows(2) {
                let ov = w[0].ground.overlap(&w[1].ground);
                assert!(ov > 0.99, "discontinuity at t = {}", w[1].t_us);
            }
            for p in &scan {
                assert!(p.energies.windows(2).all(|e| e[0] <= e[1]));
                assert!(p.gap >= 0.0);
            }
        }
    }

    #[test]
    fn spectrum_energies_match_ising_at_end() {
        let (neg, _) = default_instances();
        let s = Schedule::default();
        let p = spectrum_at(&neg, &s, 0.6).unwrap();
        let mut expected: Vec<f64> = (0..4)
            .map(|k| {
                // at t = T the envelopes are Lambda(T), Omega(T), not exactly 1
                let (_, l, o) = s.envelopes(0.6).unwrap();
                let s1 = if k & 2 == 0 { 1.0 } else { -1.0 };
                let s2 = if k & 1 == 0 { 1.0 } else { -1.0 };
                l * (neg.h1 * s1 + neg.h2 * s2) + o * neg.j12 * s1 * s2
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in p.energies.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6 * want.abs().max(1.0));
        }
    }

    #[test]
    fn unit_rescaling_preserves_spectral_structure() {
        // scaling H by kappa and times by 1/kappa leaves overlaps unchanged
        let (neg, _) = default_instances();
        let s = Schedule::default();
        let kappa = 3.0;
        let scaled_inst = neg.scaled(kappa);
        let scaled_s = Schedule {
            gamma: Envelope {
                width_us: s.gamma.width_us / kappa,
                center_us: s.gamma.center_us / kappa,
                ..s.gamma
            },
            lambda: Envelope {
                width_us: s.lambda.width_us / kappa,
                center_us: s.lambda.center_us / kappa,
                ..s.lambda
            },
            omega: Envelope {
                width_us: s.omega.width_us / kappa,
                center_us: s.omega.center_us / kappa,
                ..s.omega
            },
            total_time_us: s.total_time_us / kappa,
        };
        for frac in [0.1, 0.4, 0.8] {
            let a = spectrum_at(&neg, &s, s.total_time_us * frac).unwrap();
            let b = spectrum_at(&scaled_inst, &scaled_s, scaled_s.total_time_us * frac).unwrap();
            assert!(a.ground.overlap(&b.ground) > 1.0 - 1e-9);
            assert_abs_diff_eq!(b.gap, kappa * a.gap, epsilon = 1e-6 * b.gap.abs());
        }
    }
}
