//! Exact state-vector simulation of small phase-oracle query algorithms.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hybrid_bound;
use crate::error::{Error, Result};
use crate::operator::{max_abs, CMatrix, CVector};

/// Largest query-register width.
pub const MAX_QUERY_BITS: usize = 4;
/// Largest number of oracle calls.
pub const MAX_QUERIES: usize = 5;

/// Unitaries `U_0, ..., U_T` interleaved with `T` phase-oracle calls, acting
/// on `n` query bits followed by `workspace` extra qubits (query bits are
/// the high-order part of the basis index).
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAlgorithm {
    pub n: usize,
    pub workspace: usize,
    pub unitaries: Vec<CMatrix>,
}

fn check_register(n: usize, workspace: usize) -> Result<()> {
    if n == 0 || n > MAX_QUERY_BITS {
        return Err(Error::input(format!("query register must have 1..={MAX_QUERY_BITS} bits, got {n}")));
    }
    if workspace > n {
        return Err(Error::input(format!("{} qubits exceed the budget of {}", n + workspace, 2 * n)));
    }
    Ok(())
}

impl QueryAlgorithm {
    pub fn new(n: usize, workspace: usize, unitaries: Vec<CMatrix>) -> Result<Self> {
        check_register(n, workspace)?;
        if unitaries.is_empty() || unitaries.len() > MAX_QUERIES + 1 {
            return Err(Error::input(format!(
                "need between 1 and {} unitaries, got {}",
                MAX_QUERIES + 1,
                unitaries.len()
            )));
        }
        let dim = 1usize << (n + workspace);
        for (t, u) in unitaries.iter().enumerate() {
            if u.nrows() != dim || u.ncols() != dim {
                return Err(Error::input(format!("unitary {t} is {}x{}, expected {dim}x{dim}", u.nrows(), u.ncols())));
            }
            let defect = max_abs(&(u.adjoint() * u - CMatrix::identity(dim, dim)));
            if defect > 1e-9 {
                return Err(Error::input(format!("unitary {t} deviates from unitarity by {defect:.2e}")));
            }
        }
        Ok(Self { n, workspace, unitaries })
    }

    pub fn queries(&self) -> usize {
        self.unitaries.len() - 1
    }

    pub fn dim(&self) -> usize {
        1 << (self.n + self.workspace)
    }

    /// Final state for the oracle `|b> -> (-1)^{f(b)} |b>` with truth table `f`.
    pub fn final_state(&self, f: &[u8]) -> Result<CVector> {
        if f.len() != 1 << self.n {
            return Err(Error::input(format!("truth table has {} entries, expected {}", f.len(), 1 << self.n)));
        }
        let mut psi = CVector::zeros(self.dim());
        psi[0] = Complex64::new(1.0, 0.0);
        psi = &self.unitaries[0] * psi;
        for u in &self.unitaries[1..] {
            for (idx, amp) in psi.iter_mut().enumerate() {
                if f[idx >> self.workspace] & 1 == 1 {
                    *amp = -*amp;
                }
            }
            psi = u * psi;
        }
        Ok(psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub n: usize,
    pub workspace: usize,
    pub queries: usize,
    pub samples: usize,
    pub max_flip_prob: f64,
    /// Trace distance between the averaged output and the reference output.
    pub trace_distance: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Compares the output averaged over `functions` (equally weighted) with the
/// output under `reference`, against the hybrid-method bound computed from
/// the empirical flip probabilities.
pub fn query_sim_validate(alg: &QueryAlgorithm, functions: &[Vec<u8>], reference: &[u8]) -> Result<QueryReport> {
    if functions.is_empty() {
        return Err(Error::input("need at least one sampled function"));
    }
    let size = 1 << alg.n;
    let psi0 = alg.final_state(reference)?;
    let dim = alg.dim();
    let mut mixed = CMatrix::zeros(dim, dim);
    let mut flips = vec![0usize; size];
    for f in functions {
        let psi = alg.final_state(f)?;
        mixed += &psi * psi.adjoint();
        for (b, (x, y)) in f.iter().zip(reference).enumerate() {
            if (x ^ y) & 1 == 1 {
                flips[b] += 1;
            }
        }
    }
    let w = 1.0 / functions.len() as f64;
    let diff = mixed.scale(w) - &psi0 * psi0.adjoint();
    let diff = (&diff + diff.adjoint()).scale(0.5);
    let trace_distance = 0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>();
    let flip_probs: Vec<f64> = flips.iter().map(|&c| c as f64 * w).collect();
    let bound = hybrid_bound(&flip_probs, alg.queries())?;
    Ok(QueryReport {
        n: alg.n,
        workspace: alg.workspace,
        queries: alg.queries(),
        samples: functions.len(),
        max_flip_prob: flip_probs.iter().copied().fold(0.0, f64::max),
        trace_distance,
        bound,
        passed: trace_distance <= bound + 1e-12,
    })
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian
/// matrix, with the phases of `R`'s diagonal absorbed.
pub fn haar_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `T + 1` Haar-random unitaries.
pub fn random_algorithm<R: Rng>(n: usize, workspace: usize, queries: usize, rng: &mut R) -> Result<QueryAlgorithm> {
    check_register(n, workspace)?;
    let dim = 1 << (n + workspace);
    let unitaries = (0..=queries).map(|_| haar_unitary(dim, rng)).collect();
    QueryAlgorithm::new(n, workspace, unitaries)
}

/// Uniform superposition followed by `queries` Grover iterations (oracle
/// then diffusion about the uniform state).
pub fn grover_algorithm(n: usize, queries: usize) -> Result<QueryAlgorithm> {
    check_register(n, 0)?;
    let dim = 1usize << n;
    let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let hadamards = CMatrix::from_fn(dim, dim, |i, j| {
        let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        amp * sign
    });
    let s = CVector::from_element(dim, amp);
    let diffusion = (&s * s.adjoint()).scale(2.0) - CMatrix::identity(dim, dim);
    let mut unitaries = vec![hadamards];
    unitaries.extend(std::iter::repeat_n(diffusion, queries));
    QueryAlgorithm::new(n, 0, unitaries)
}

/// `samples` truth tables on `n` bits, each all-ones except for `zeros`
/// uniformly placed zeros. The all-ones table is the natural reference.
pub fn planted_zero_functions<R: Rng>(n: usize, zeros: usize, samples: usize, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    check_register(n, 0)?;
    let size = 1usize << n;
    if zeros > size {
        return Err(Error::input(format!("cannot plant {zeros} zeros among {size} strings")));
    }
    Ok((0..samples)
        .map(|_| {
            let mut f = vec![1u8; size];
            for b in sample(rng, size, zeros) {
                f[b] = 0;
            }
            f
        })
        .collect())
}
