//! Dense Hermitian linear algebra: Pauli-sum assembly, spectral decomposition,
//! Gibbs states, PSD matrix functions and the KMS inner product.
//!
//! Everything is stored dense in the computational basis. Qubit 0 is the
//! leftmost character of a Pauli word and the most significant bit of a
//! basis index.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest system accepted by [`build_hamiltonian`] unless a larger cap is
/// passed explicitly.
pub const MAX_QUBITS: usize = 12;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const NEG_EIG_TOL: f64 = 1e-12;
/// Eigenvalues of a nominally PSD matrix in `[-PSD_FLOOR * scale, 0)` are
/// treated as rounding noise and clipped to zero.
pub const PSD_FLOOR: f64 = 1e-10;

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// One `coefficient * word` summand of a Pauli-sum operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub word: String,
}

impl PauliTerm {
    pub fn new(coefficient: f64, word: impl Into<String>) -> Result<Self> {
        let word = word.into();
        if !coefficient.is_finite() {
            return Err(Error::input(format!("non-finite coefficient {coefficient} for '{word}'")));
        }
        if word.is_empty() {
            return Err(Error::input("empty Pauli word"));
        }
        if let Some(bad) = word.chars().find(|c| !matches!(c, 'I' | 'X' | 'Y' | 'Z')) {
            return Err(Error::input(format!("invalid Pauli letter '{bad}' in '{word}'")));
        }
        Ok(Self { coefficient, word })
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.coefficient, self.word)
    }
}

/// Parses the `<coefficient> <pauli-word>` line format. `#` starts a comment.
pub fn parse_pauli_terms(text: &str, source_name: &str) -> Result<Vec<PauliTerm>> {
    let mut terms = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { source_name: source_name.to_string(), line: idx + 1, msg };
        let mut fields = line.split_whitespace();
        let (Some(coef), Some(word), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected '<coefficient> <pauli-word>', got '{line}'")));
        };
        let coefficient: f64 = coef.parse().map_err(|_| parse_err(format!("bad coefficient '{coef}'")))?;
        let term = PauliTerm::new(coefficient, word).map_err(|e| parse_err(e.to_string()))?;
        terms.push(term);
    }
    Ok(terms)
}

pub fn read_pauli_file(path: &Path) -> Result<Vec<PauliTerm>> {
    let text = std::fs::read_to_string(path)?;
    parse_pauli_terms(&text, &path.display().to_string())
}

/// Dense Hermitian matrix of dimension `2^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Accepts `matrix` if it is square and equals its adjoint to
    /// `1e-12` relative to its largest entry. The stored matrix is the
    /// exactly Hermitian part `(M + M†)/2`.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::input(format!("operator must be square, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        let scale = max_abs(&matrix).max(1.0);
        let resid = hermitian_residual(&matrix);
        if resid > HERMITIAN_TOL * scale {
            return Err(Error::input(format!("matrix is not Hermitian (residual {resid:.3e})")));
        }
        let herm = (&matrix + matrix.adjoint()).scale(0.5);
        Ok(Self { matrix: herm })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Largest absolute eigenvalue.
    pub fn norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.matrix.clone().symmetric_eigenvalues().iter().fold(0.0_f64, |acc, e| acc.max(e.abs()))
    }

    /// `Tr[rho * self]`, real part.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        trace_product(rho.matrix(), &self.matrix).re
    }
}

/// `Tr[a * b]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Dense matrix of a single Pauli word.
pub fn pauli_word_matrix(word: &str) -> Result<CMatrix> {
    let n = word.len();
    let dim = 1usize << n;
    let mut xmask = 0usize;
    let letters: Vec<char> = word.chars().collect();
    for (q, &c) in letters.iter().enumerate() {
        let bit = 1 << (n - 1 - q);
        match c {
            'X' | 'Y' => xmask |= bit,
            'I' | 'Z' => {}
            other => return Err(Error::input(format!("invalid Pauli letter '{other}'"))),
        }
    }
    let mut m = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut phase = Complex64::new(1.0, 0.0);
        for (q, &c) in letters.iter().enumerate() {
            let set = col >> (n - 1 - q) & 1 == 1;
            match c {
                'Z' if set => phase = -phase,
                // Y|0> = i|1>, Y|1> = -i|0>
                'Y' => phase *= if set { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) },
                _ => {}
            }
        }
        m[(col ^ xmask, col)] = phase;
    }
    Ok(m)
}

/// Assembles `sum_k coeff_k * P_k` on `n` qubits, capped at [`MAX_QUBITS`].
pub fn build_hamiltonian(terms: &[PauliTerm], n: usize) -> Result<HermitianOperator> {
    build_hamiltonian_capped(terms, n, MAX_QUBITS)
}

/// [`build_hamiltonian`] with an explicit qubit cap.
pub fn build_hamiltonian_capped(terms: &[PauliTerm], n: usize, max_qubits: usize) -> Result<HermitianOperator> {
    if n == 0 {
        return Err(Error::input("system size must be at least one qubit"));
    }
    if n > max_qubits {
        return Err(Error::input(format!(
            "{n} qubits exceeds the dense cap of {max_qubits}; raise the cap explicitly"
        )));
    }
    let dim = 1usize << n;
    let mut m = CMatrix::zeros(dim, dim);
    for term in terms {
        if term.word.len() != n {
            return Err(Error::input(format!(
                "Pauli word '{}' has length {}, expected {n}",
                term.word,
                term.word.len()
            )));
        }
        if !term.coefficient.is_finite() {
            return Err(Error::input(format!("non-finite coefficient in '{term}'")));
        }
        m += pauli_word_matrix(&term.word)?.scale(term.coefficient);
    }
    Ok(HermitianOperator { matrix: m })
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(E) V†`.
    pub fn reconstruct(&self) -> CMatrix {
        self.from_eigenbasis(&diag(&self.eigenvalues))
    }

    /// `V† m V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    /// `V m V†`.
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        &self.eigenvectors * m * self.eigenvectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Largest absolute eigenvalue.
    pub fn norm(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Normalized Gibbs weights `exp(-beta (E_i - E_min)) / Z` in the
    /// eigenbasis ordering.
    pub fn gibbs_weights(&self, beta: f64) -> Result<Vec<f64>> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::input(format!("beta must be finite and nonnegative, got {beta}")));
        }
        let e0 = self.min();
        let w: Vec<f64> = self.eigenvalues.iter().map(|e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / z).collect())
    }
}

pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0))))
}

fn sorted_eigen(m: CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.symmetric_eigen();
    let dim = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn eig_decompose(op: &HermitianOperator) -> Result<Spectrum> {
    let resid = hermitian_residual(op.matrix());
    if resid > HERMITIAN_TOL * max_abs(op.matrix()).max(1.0) {
        return Err(Error::input(format!("eig_decompose needs a Hermitian operator (residual {resid:.3e})")));
    }
    let (eigenvalues, eigenvectors) = sorted_eigen(op.matrix().clone());
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Unit-trace positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (tolerance `1e-12`).
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let herm = HermitianOperator::from_matrix(matrix)?;
        let tr = herm.matrix().trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::input(format!("density matrix trace is {tr}, expected 1")));
        }
        let min = herm.matrix().clone().symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min < -NEG_EIG_TOL {
            return Err(Error::input(format!("density matrix has negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix: herm.into_matrix() })
    }

    /// Wraps a matrix the caller already knows is a state.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim).unscale(dim as f64) }
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::input("cannot build a pure state from a zero vector"));
        }
        let v = psi.unscale(norm);
        Ok(Self { matrix: &v * v.adjoint() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigen(self.matrix.clone()).0
    }
}

/// `exp(-beta H) / Tr exp(-beta H)` from a precomputed spectrum, with energies
/// shifted by their minimum before exponentiation.
pub fn gibbs_state(spec: &Spectrum, beta: f64) -> Result<DensityMatrix> {
    let w = spec.gibbs_weights(beta)?;
    let m = spec.from_eigenbasis(&diag(&w));
    Ok(DensityMatrix { matrix: (&m + m.adjoint()).scale(0.5) })
}

fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = sorted_eigen((m + m.adjoint()).scale(0.5));
    let mapped: Vec<f64> = values.into_iter().map(f).collect();
    &vectors * diag(&mapped) * vectors.adjoint()
}

fn checked_eigenvalues(m: &CMatrix, what: &str) -> Result<(Vec<f64>, CMatrix, f64)> {
    let resid = hermitian_residual(m);
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    if resid > 1e-10 * scale.max(1.0) {
        return Err(Error::numeric(format!("{what}: matrix is not Hermitian (residual {resid:.3e})")));
    }
    let (values, vectors) = sorted_eigen((m + m.adjoint()).scale(0.5));
    let top = values.last().copied().unwrap_or(0.0).abs().max(1.0);
    if let Some(&low) = values.first() {
        if low < -PSD_FLOOR * top {
            return Err(Error::numeric(format!("{what}: matrix is not positive semidefinite (eigenvalue {low:.3e})")));
        }
    }
    Ok((values, vectors, top))
}

/// Principal square root of a PSD matrix. Eigenvalues in the rounding band
/// `[-1e-10, 0)` are clipped to zero; anything more negative is an error.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors, _) = checked_eigenvalues(m, "psd_sqrt")?;
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(&vectors * diag(&roots) * vectors.adjoint())
}

/// Pseudo-inverse square root: eigenvalues below `rank_tol * max_eigenvalue`
/// map to zero.
pub fn pinv_sqrt(m: &CMatrix, rank_tol: f64) -> Result<CMatrix> {
    let (values, vectors, _) = checked_eigenvalues(m, "pinv_sqrt")?;
    let cutoff = rank_tol * values.last().copied().unwrap_or(0.0).max(0.0);
    let inv: Vec<f64> = values.iter().map(|&v| if v > cutoff && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    Ok(&vectors * diag(&inv) * vectors.adjoint())
}

/// Rank tolerance used when a full-rank state is required.
pub const RANK_TOL: f64 = 1e-13;

/// `rho^{1/2}` and `rho^{-1/2}` of a state that must be full rank.
pub fn full_rank_sqrt_pair(rho: &DensityMatrix) -> Result<(CMatrix, CMatrix)> {
    let (values, vectors) = sorted_eigen(rho.matrix().clone());
    let top = values.last().copied().unwrap_or(0.0);
    let low = values.first().copied().unwrap_or(0.0);
    if !(low > RANK_TOL * top) {
        return Err(Error::numeric(format!(
            "state is singular beyond tolerance (min eigenvalue {low:.3e}, max {top:.3e}); \
             reduce beta*||H||"
        )));
    }
    let s: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    let si: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    Ok((&vectors * diag(&s) * vectors.adjoint(), &vectors * diag(&si) * vectors.adjoint()))
}

/// `Tr[X† rho^{1/2} Y rho^{1/2}]`.
pub fn kms_inner_product(x: &CMatrix, y: &CMatrix, rho: &DensityMatrix) -> Result<Complex64> {
    let d = rho.dim();
    if x.shape() != (d, d) || y.shape() != (d, d) {
        return Err(Error::input("kms_inner_product: dimension mismatch"));
    }
    let (sqrt_rho, _) = full_rank_sqrt_pair(rho)?;
    let w = &sqrt_rho * y * &sqrt_rho;
    Ok(trace_product(&x.adjoint(), &w))
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    spectral_map(m, f)
}
