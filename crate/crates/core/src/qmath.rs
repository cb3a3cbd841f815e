//! Dense two-qubit complex linear algebra and the figures of merit used
//! everywhere else: fidelity, success, negativity and purity.
//!
//! The computational basis is ordered |00>, |01>, |10>, |11> with qubit 1
//! (Hydrogen) as the left tensor factor, and sigma_z |k> = (-1)^k |k>.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Matrix2c = Matrix2<C64>;
pub type Matrix4c = Matrix4<C64>;
pub type Vector4c = Vector4<C64>;

/// Max-abs entrywise tolerance for unitarity / Hermiticity checks.
pub const OPERATOR_TOL: f64 = 1e-10;
/// Density eigenvalues in [-EIG_CLIP, 0) are treated as exact zeros.
pub const EIG_CLIP: f64 = 1e-9;
/// Norm tolerance for pure states.
pub const STATE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QmathError {
    #[error("invalid qubit index {0}; expected 1 or 2")]
    InvalidQubit(usize),
    #[error("matrix is not Hermitian (max |A - A^dag| entry = {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (max |U^dag U - I| entry = {0:.3e})")]
    NotUnitary(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("state vector is not normalized (norm = {0})")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    Density,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A 4x4 complex matrix tagged with the role it plays.
///
/// Constructors validate the invariants of the claimed role; raw access to
/// the entries is always available for composition.
#[derive(Debug, Clone)]
pub struct Operator {
    entries: Matrix4c,
    kind: OperatorKind,
}

impl Operator {
    pub fn general(entries: Matrix4c) -> Self {
        Self {
            entries,
            kind: OperatorKind::General,
        }
    }

    pub fn hermitian(entries: Matrix4c) -> Result<Self, QmathError> {
        let dev = max_abs(&(entries.adjoint() - entries));
        if dev > OPERATOR_TOL {
            return Err(QmathError::NotHermitian(dev));
        }
        Ok(Self {
            entries,
            kind: OperatorKind::Hermitian,
        })
    }

    pub fn unitary(entries: Matrix4c) -> Result<Self, QmathError> {
        let dev = max_abs(&(entries.adjoint() * entries - Matrix4c::identity()));
        if dev > OPERATOR_TOL {
            return Err(QmathError::NotUnitary(dev));
        }
        Ok(Self {
            entries,
            kind: OperatorKind::Unitary,
        })
    }

    pub fn density(entries: Matrix4c) -> Result<Self, QmathError> {
        let herm_dev = max_abs(&(entries.adjoint() - entries));
        if herm_dev > OPERATOR_TOL {
            return Err(QmathError::InvalidDensity(format!(
                "not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > OPERATOR_TOL || tr.im.abs() > OPERATOR_TOL {
            return Err(QmathError::InvalidDensity(format!("trace = {tr} != 1")));
        }
        let (evals, _) = eigh(&entries);
        if evals[0] < -EIG_CLIP {
            return Err(QmathError::InvalidDensity(format!(
                "negative eigenvalue {:.3e}",
                evals[0]
            )));
        }
        Ok(Self {
            entries,
            kind: OperatorKind::Density,
        })
    }

    /// Density wrapper for simulator snapshots: same validation as
    /// [`Operator::density`] but with a looser trace tolerance suited to
    /// long channel compositions.
    pub fn density_snapshot(entries: Matrix4c) -> Result<Self, QmathError> {
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(QmathError::InvalidDensity(format!("trace = {tr} != 1")));
        }
        let herm_dev = max_abs(&(entries.adjoint() - entries));
        if herm_dev > 1e-8 {
            return Err(QmathError::InvalidDensity(format!(
                "not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        // symmetrize away roundoff so downstream eigensolves stay clean
        let sym = (entries + entries.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self {
            entries: sym,
            kind: OperatorKind::Density,
        })
    }

    pub fn entries(&self) -> &Matrix4c {
        &self.entries
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }
}

/// A normalized two-qubit pure state.
#[derive(Debug, Clone)]
pub struct PureState {
    amplitudes: Vector4c,
}

impl PureState {
    pub fn new(amplitudes: Vector4c) -> Result<Self, QmathError> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(QmathError::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes the input vector; errors only on the zero vector.
    pub fn normalized(amplitudes: Vector4c) -> Result<Self, QmathError> {
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(QmathError::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes: amplitudes / C64::new(norm, 0.0),
        })
    }

    /// Computational basis state |k1 k2> for index k = 2*k1 + k2.
    pub fn basis(k: usize) -> Self {
        let mut v = Vector4c::zeros();
        v[k] = C64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    /// |--> with |-> = (|0>-|1>)/sqrt(2), the ground state of the easy
    /// Hamiltonian.
    pub fn minus_minus() -> Self {
        let a = C64::new(0.5, 0.0);
        Self {
            amplitudes: Vector4c::new(a, -a, -a, a),
        }
    }

    pub fn amplitudes(&self) -> &Vector4c {
        &self.amplitudes
    }

    pub fn projector(&self) -> Matrix4c {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    /// Populations |amplitude|^2 in the computational basis.
    pub fn populations(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        for k in 0..4 {
            p[k] = self.amplitudes[k].norm_sqr();
        }
        p
    }

    /// |<a|b>|.
    pub fn overlap(&self, other: &PureState) -> f64 {
        (self.amplitudes.adjoint() * &other.amplitudes)[(0, 0)].norm()
    }
}

pub fn max_abs(m: &Matrix4c) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn kron2(a: &Matrix2c, b: &Matrix2c) -> Matrix4c {
    let mut out = Matrix4c::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn pauli2(axis: Axis) -> Matrix2c {
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let z = C64::new(0.0, 0.0);
    match axis {
        Axis::X => Matrix2c::new(z, o, o, z),
        Axis::Y => Matrix2c::new(z, -i, i, z),
        Axis::Z => Matrix2c::new(o, z, z, -o),
    }
}

/// sigma_axis acting on the given qubit (1 or 2), identity on the other.
pub fn pauli(axis: Axis, qubit: usize) -> Result<Operator, QmathError> {
    let id = Matrix2c::identity();
    let s = pauli2(axis);
    let m = match qubit {
        1 => kron2(&s, &id),
        2 => kron2(&id, &s),
        q => return Err(QmathError::InvalidQubit(q)),
    };
    Operator::hermitian(m)
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Returns (eigenvalues, eigenvectors); column k of the matrix is the
/// eigenvector for eigenvalue k.
pub fn eigh(m: &Matrix4c) -> ([f64; 4], Matrix4c) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut vals = [0.0; 4];
    let mut vecs = Matrix4c::zeros();
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = eig.eigenvalues[src];
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// exp(-i H t) for Hermitian H, computed by eigendecomposition.
pub fn expm_hermitian(h: &Operator, t: f64) -> Result<Operator, QmathError> {
    let dev = max_abs(&(h.entries().adjoint() - h.entries()));
    if dev > OPERATOR_TOL {
        return Err(QmathError::NotHermitian(dev));
    }
    Ok(Operator {
        entries: expm_hermitian_raw(h.entries(), t),
        kind: OperatorKind::Unitary,
    })
}

/// Unchecked inner kernel of [`expm_hermitian`] for hot loops.
pub fn expm_hermitian_raw(h: &Matrix4c, t: f64) -> Matrix4c {
    let (vals, vecs) = eigh(h);
    let mut out = Matrix4c::zeros();
    for k in 0..4 {
        let phase = C64::new(0.0, -vals[k] * t).exp();
        let v = vecs.column(k);
        out += (v * v.adjoint()) * phase;
    }
    out
}

fn validated_density_eigs(rho: &Operator) -> Result<[f64; 4], QmathError> {
    let (mut evals, _) = eigh(rho.entries());
    for e in evals.iter_mut() {
        if *e < 0.0 {
            if *e < -EIG_CLIP {
                return Err(QmathError::InvalidDensity(format!(
                    "negative eigenvalue {:.3e}",
                    *e
                )));
            }
            *e = 0.0;
        }
    }
    Ok(evals)
}

fn check_density(rho: &Operator) -> Result<(), QmathError> {
    let tr = rho.entries().trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(QmathError::InvalidDensity(format!("trace = {tr} != 1")));
    }
    Ok(())
}

/// Squared overlap <g|rho|g> with a pure target.
pub fn fidelity_pure(rho: &Operator, target: &PureState) -> Result<f64, QmathError> {
    check_density(rho)?;
    let g = target.amplitudes();
    let val = (g.adjoint() * rho.entries() * g)[(0, 0)].re;
    Ok(val.clamp(0.0, 1.0))
}

/// Squared Bhattacharyya fidelity between the computational-basis diagonals
/// of rho and of the pure target. Equals the target population when the
/// target is a basis state.
pub fn success(rho: &Operator, target: &PureState) -> Result<f64, QmathError> {
    check_density(rho)?;
    let q = target.populations();
    let mut sum = 0.0;
    for k in 0..4 {
        let p = rho.entries()[(k, k)].re.max(0.0);
        sum += (p * q[k]).sqrt();
    }
    Ok((sum * sum).clamp(0.0, 1.0))
}

/// Partial transpose over qubit 2 (the right tensor factor).
pub fn partial_transpose_2(m: &Matrix4c) -> Matrix4c {
    let mut out = *m;
    for a in 0..2 {
        for ap in 0..2 {
            let (r, c) = (2 * a, 2 * ap);
            let tmp = out[(r, c + 1)];
            out[(r, c + 1)] = out[(r + 1, c)];
            out[(r + 1, c)] = tmp;
        }
    }
    out
}

/// Entanglement negativity: absolute sum of the negative eigenvalues of the
/// partial transpose over qubit 2.
pub fn negativity(rho: &Operator) -> Result<f64, QmathError> {
    check_density(rho)?;
    validated_density_eigs(rho)?;
    let pt = partial_transpose_2(rho.entries());
    let (evals, _) = eigh(&pt);
    // + 0.0 canonicalizes the -0.0 an empty sum produces
    Ok(evals.iter().filter(|&&e| e < 0.0).map(|e| -e).sum::<f64>() + 0.0)
}

/// tr(rho^2).
pub fn purity(rho: &Operator) -> Result<f64, QmathError> {
    check_density(rho)?;
    Ok((rho.entries() * rho.entries()).trace().re)
}

/// The four trajectory metrics in the reporting convention used in all
/// result tables: fidelity and success are the overlap-style square roots
/// of the primitive quantities above, so that for a basis-state target the
/// success equals sqrt(ground population) and both metrics coincide once
/// the state is diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub fidelity: f64,
    pub success: f64,
    pub negativity: f64,
    pub purity: f64,
}

impl Metrics {
    pub fn evaluate(rho: &Operator, target: &PureState) -> Result<Self, QmathError> {
        Ok(Self {
            fidelity: fidelity_pure(rho, target)?.sqrt(),
            success: success(rho, target)?.sqrt(),
            negativity: negativity(rho)?,
            purity: purity(rho)?,
        })
    }
}
