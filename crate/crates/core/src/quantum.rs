//! Dense state vectors and Hermitian operators for registers of up to four
//! qubits.
//!
//! Basis ordering: qubit 0 is the most significant bit of the basis index, so
//! basis state `|b_0 b_1 ... b_{n-1}>` has index `sum_i b_i 2^(n-1-i)` and its
//! bitstring reads left to right from qubit 0. `|1>` is the Rydberg state and
//! `sigma_z |1> = +|1>`, so the ground register has magnetization `-n`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_QUBITS: usize = 4;
const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-10;
/// Norm drift above which stepped integration refuses to renormalize.
pub const STEPPED_DRIFT_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn sigma_x() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Matrix2<C64> {
    Matrix2::new(ZERO, -I, I, ZERO)
}

/// `diag(-1, +1)`: ground `|0>` has eigenvalue -1, Rydberg `|1>` has +1.
pub fn sigma_z() -> Matrix2<C64> {
    Matrix2::new(-ONE, ZERO, ZERO, ONE)
}

/// Rydberg occupation `N = (1 + sigma_z) / 2`.
pub fn occupation() -> Matrix2<C64> {
    Matrix2::new(ZERO, ZERO, ZERO, ONE)
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::UnsupportedQubitCount(n));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// The reference register `|0...0>`.
    pub fn ground(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1 << n_qubits;
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amplitudes = DVector::from_element(dim, ZERO);
        amplitudes[index] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Builds a state from raw amplitudes; the vector must already be
    /// normalized.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {dim} is not a power of two"
            )));
        }
        let n_qubits = dim.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        let state = Self { n_qubits, amplitudes: DVector::from_vec(amplitudes) };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Born-rule probabilities of the computational basis states.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|<self|other>|`, insensitive to global phase.
    pub fn overlap(&self, other: &Self) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm()
    }

    /// Max-abs amplitude difference (phase sensitive).
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.amplitudes - &other.amplitudes).camax()
    }

    pub(crate) fn vector(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub(crate) fn from_vector_unchecked(n_qubits: usize, amplitudes: DVector<C64>) -> Self {
        Self { n_qubits, amplitudes }
    }
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    /// `exp(-i H t)` assembled from the eigenbasis.
    pub fn propagator(&self, t: f64) -> DMatrix<C64> {
        let dim = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -lambda * t);
            for i in 0..dim {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("operator matrix must be square".into()));
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let deviation = (&matrix - matrix.adjoint()).camax();
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::InvalidArgument(format!(
                "operator is not Hermitian (deviation {deviation:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: &self.matrix * C64::from(factor) }
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(Self { matrix: &self.matrix + &other.matrix })
    }

    /// Operator product `self * other`; Hermitian only when the factors
    /// commute, which callers guarantee (products of diagonal projectors).
    pub(crate) fn product_unchecked(&self, other: &Self) -> Self {
        Self { matrix: &self.matrix * &other.matrix }
    }

    /// Max-abs deviation from the conjugate transpose.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).camax()
    }

    pub fn spectrum(&self) -> Spectrum {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
        Spectrum { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum().values
    }

    pub fn apply(&self, state: &StateVector) -> Result<DVector<C64>> {
        check_dim(self.dim(), state.dim())?;
        Ok(&self.matrix * state.vector())
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Tensor-product embedding of a single-qubit operator acting on `site`.
pub fn embed_single_qubit(op: &Matrix2<C64>, site: usize, n_qubits: usize) -> Result<HermitianOperator> {
    check_qubits(n_qubits)?;
    if site >= n_qubits {
        return Err(Error::SiteOutOfRange { site, n_qubits });
    }
    let dim = 1 << n_qubits;
    let shift = n_qubits - 1 - site;
    let mut matrix = DMatrix::from_element(dim, dim, ZERO);
    for row in 0..dim {
        for col in 0..dim {
            // Every other qubit must be untouched.
            if (row ^ col) & !(1 << shift) != 0 {
                continue;
            }
            let r = (row >> shift) & 1;
            let c = (col >> shift) & 1;
            matrix[(row, col)] = op[(r, c)];
        }
    }
    HermitianOperator::new(matrix)
}

/// `sum_i op_i` over all sites.
pub fn collective(op: &Matrix2<C64>, n_qubits: usize) -> Result<HermitianOperator> {
    let mut total = HermitianOperator::zeros(1 << n_qubits);
    for site in 0..n_qubits {
        total = total.plus(&embed_single_qubit(op, site, n_qubits)?)?;
    }
    Ok(total)
}

/// Total magnetization `sum_i sigma_z_i`.
pub fn total_magnetization(n_qubits: usize) -> Result<HermitianOperator> {
    collective(&sigma_z(), n_qubits)
}

/// Exact `exp(-i H t)|state>` via the Hermitian eigendecomposition.
pub fn evolve_constant(state: &StateVector, hamiltonian: &HermitianOperator, duration: f64) -> Result<StateVector> {
    check_dim(hamiltonian.dim(), state.dim())?;
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be finite and >= 0, got {duration}")));
    }
    if duration == 0.0 {
        return Ok(state.clone());
    }
    let u = hamiltonian.spectrum().propagator(duration);
    Ok(StateVector::from_vector_unchecked(state.n_qubits, u * state.vector()))
}

/// Classical fourth-order Runge-Kutta integration of `i d|psi>/dt = H(t)|psi>`
/// from `t = 0` to `t = duration`.
///
/// The final step is shortened to land exactly on `duration`. The result is
/// renormalized when the accumulated norm drift is below
/// [`STEPPED_DRIFT_TOL`]; larger drift is reported as an error.
pub fn evolve_stepped<F>(state: &StateVector, hamiltonian_at: F, duration: f64, dt: f64) -> Result<StateVector>
where
    F: Fn(f64) -> Result<HermitianOperator>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be finite and >= 0, got {duration}")));
    }
    let minus_i = C64::new(0.0, -1.0);
    let mut psi = state.vector().clone();
    let steps = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    let mut t = 0.0;
    for k in 0..steps {
        let h = if k + 1 == steps { duration - t } else { dt };
        let h0 = hamiltonian_at(t)?;
        let hm = hamiltonian_at(t + 0.5 * h)?;
        let h1 = hamiltonian_at(t + h)?;
        check_dim(h0.dim(), psi.len())?;
        let step = C64::from(h);
        let k1 = h0.matrix() * &psi * minus_i;
        let k2 = hm.matrix() * (&psi + &k1 * (step * 0.5)) * minus_i;
        let k3 = hm.matrix() * (&psi + &k2 * (step * 0.5)) * minus_i;
        let k4 = h1.matrix() * (&psi + &k3 * step) * minus_i;
        psi += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (step / 6.0);
        t += h;
    }
    let norm = psi.norm();
    let drift = (norm - 1.0).abs();
    if drift > STEPPED_DRIFT_TOL {
        return Err(Error::NormDrift { drift });
    }
    psi /= C64::from(norm);
    Ok(StateVector::from_vector_unchecked(state.n_qubits, psi))
}

/// Real part of `<psi|O|psi>`; the imaginary residue of a Hermitian
/// observable is numerical noise and is dropped.
pub fn expectation(state: &StateVector, observable: &HermitianOperator) -> Result<f64> {
    let applied = observable.apply(state)?;
    let value = state.vector().dotc(&applied);
    debug_assert!(value.im.abs() < 1e-9, "imaginary residue {}", value.im);
    Ok(value.re)
}
