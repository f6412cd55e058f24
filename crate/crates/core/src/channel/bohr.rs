use crate::error::{Error, Result};
use crate::operator::{max_abs, operator_norm, CMatrix, HermitianOperator, Spectrum};

use super::filter::GaussianFilter;

/// Splitting of an observable by Bohr frequency `nu = E_row - E_col`.
///
/// Stored in the energy eigenbasis as one frequency label per matrix entry.
/// Frequencies whose magnitudes lie within the grouping tolerance share a
/// group; the grouping is done on `|nu|` so that the group of `(j, i)` is
/// always the exact negative of the group of `(i, j)`.
#[derive(Debug, Clone)]
pub struct BohrDecomposition {
    /// Distinct group frequencies, ascending.
    frequencies: Vec<f64>,
    /// Row-major `dim x dim` table of indices into `frequencies`.
    assignment: Vec<usize>,
    /// The observable in the energy eigenbasis.
    eigen_matrix: CMatrix,
    basis: CMatrix,
    source_norm: f64,
}

/// One frequency component in the computational basis.
#[derive(Debug, Clone)]
pub struct BohrGroup {
    pub nu: f64,
    pub component: CMatrix,
}

impl BohrDecomposition {
    pub fn dim(&self) -> usize {
        self.eigen_matrix.nrows()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Operator norm of the decomposed observable.
    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    /// Group frequency attached to eigenbasis entry `(i, j)`.
    pub fn frequency_of(&self, i: usize, j: usize) -> f64 {
        self.frequencies[self.assignment[i * self.dim() + j]]
    }

    pub fn eigen_matrix(&self) -> &CMatrix {
        &self.eigen_matrix
    }

    /// Components `A_nu` rotated back to the computational basis. Groups
    /// whose eigenbasis entries are all at rounding level are skipped.
    pub fn groups(&self) -> Vec<BohrGroup> {
        let d = self.dim();
        let floor = 1e-14 * crate::operator::max_abs(&self.eigen_matrix);
        let mut out = Vec::new();
        for (g, &nu) in self.frequencies.iter().enumerate() {
            let mut block = CMatrix::zeros(d, d);
            let mut any = false;
            for i in 0..d {
                for j in 0..d {
                    if self.assignment[i * d + j] == g {
                        block[(i, j)] = self.eigen_matrix[(i, j)];
                        any |= self.eigen_matrix[(i, j)].norm() > floor;
                    }
                }
            }
            if any {
                out.push(BohrGroup { nu, component: &self.basis * block * self.basis.adjoint() });
            }
        }
        out
    }

    /// `sum_nu g(nu) A_nu` in the energy eigenbasis.
    pub fn filtered_eigen(&self, filter: &GaussianFilter) -> CMatrix {
        let d = self.dim();
        let weights: Vec<f64> = self.frequencies.iter().map(|&nu| filter.weight(nu)).collect();
        CMatrix::from_fn(d, d, |i, j| self.eigen_matrix[(i, j)] * weights[self.assignment[i * d + j]])
    }
}

/// Groups the entries of `a` (in the eigenbasis of `spec`) by Bohr frequency.
pub fn bohr_decompose(a: &HermitianOperator, spec: &Spectrum, group_tol: f64) -> Result<BohrDecomposition> {
    let d = spec.dim();
    if a.dim() != d {
        return Err(Error::input(format!("observable dimension {} does not match Hamiltonian dimension {d}", a.dim())));
    }
    if !(group_tol > 0.0) || !group_tol.is_finite() {
        return Err(Error::input(format!("grouping tolerance must be positive, got {group_tol}")));
    }
    let e = &spec.eigenvalues;

    let mut mags: Vec<f64> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            mags.push((e[i] - e[j]).abs());
        }
    }
    mags.sort_by(f64::total_cmp);
    // Single-linkage clusters over |nu|; the cluster containing 0 pins to 0.
    let mut clusters: Vec<(f64, f64, f64)> = Vec::new(); // (lo, hi, mean)
    let mut start = 0;
    for k in 1..=mags.len() {
        if k == mags.len() || mags[k] - mags[k - 1] > group_tol {
            let slice = &mags[start..k];
            let mean = if clusters.is_empty() && slice[0] <= group_tol {
                0.0
            } else {
                slice.iter().sum::<f64>() / slice.len() as f64
            };
            clusters.push((slice[0], slice[slice.len() - 1], mean));
            start = k;
        }
    }
    let locate = |m: f64| -> f64 {
        let idx = clusters.partition_point(|c| c.1 < m);
        clusters[idx.min(clusters.len() - 1)].2
    };

    let mut signed: Vec<f64> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let nu = e[i] - e[j];
            let mag = locate(nu.abs());
            signed.push(if nu < 0.0 { -mag } else { mag });
        }
    }
    let mut frequencies = signed.clone();
    frequencies.sort_by(f64::total_cmp);
    frequencies.dedup();
    let assignment = signed.iter().map(|nu| frequencies.partition_point(|f| f < nu)).collect();

    let eigen_matrix = spec.to_eigenbasis(a.matrix());
    Ok(BohrDecomposition {
        frequencies,
        assignment,
        eigen_matrix,
        basis: spec.eigenvectors.clone(),
        source_norm: a.norm(),
    })
}

/// Filtered observable `sum_nu g(nu) A_nu` in the computational basis.
///
/// Fails if the result has larger norm than the source (beyond `1e-9`),
/// which would contradict the unit-L1 time-domain filter.
pub fn operator_fourier_transform(decomp: &BohrDecomposition, filter: &GaussianFilter) -> Result<CMatrix> {
    let eig = decomp.filtered_eigen(filter);
    let norm = operator_norm(&eig);
    if norm > decomp.source_norm + 1e-9 {
        return Err(Error::construction(format!(
            "filtered observable norm {norm:.12} exceeds source norm {:.12}",
            decomp.source_norm
        )));
    }
    Ok(&decomp.basis * eig * decomp.basis.adjoint())
}

/// Residual of `sum_nu A_nu = A`.
pub fn reassembly_residual(decomp: &BohrDecomposition, a: &HermitianOperator) -> f64 {
    let mut total = CMatrix::zeros(decomp.dim(), decomp.dim());
    for g in decomp.groups() {
        total += g.component;
    }
    max_abs(&(total - a.matrix()))
}
