use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{full_rank_sqrt_pair, max_abs, trace_product, CMatrix, DensityMatrix, HermitianOperator};

use super::MeasurementChannel;

/// Residuals of the exact identities a detailed-balance channel satisfies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedBalanceReport {
    pub observable: String,
    /// `||sum K†K - I||_max`
    pub completeness: f64,
    /// `||N[rho] - rho||_max`
    pub fixed_point: f64,
    /// Largest violation of `<B_i, N†[B_j]>_rho = <N†[B_i], B_j>_rho` over
    /// matrix units, `N†` being the Heisenberg-picture map.
    pub kms_channel: f64,
    /// `||rho^{-1/2} K1 rho^{1/2} - K1†||_max`
    pub kms_kraus_1: f64,
    pub kms_kraus_2: f64,
    pub tol: f64,
    pub passed: bool,
}

impl DetailedBalanceReport {
    pub fn worst(&self) -> f64 {
        [self.completeness, self.fixed_point, self.kms_channel, self.kms_kraus_1, self.kms_kraus_2]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Checks completeness, the Gibbs fixed point, channel-level KMS symmetry and
/// the per-Kraus KMS relation for `K1`, `K2`. `rho` must be full rank.
pub fn verify_detailed_balance(
    ch: &MeasurementChannel,
    rho: &DensityMatrix,
    tol: f64,
) -> Result<DetailedBalanceReport> {
    let d = ch.dim();
    if rho.dim() != d {
        return Err(Error::input("verify_detailed_balance: dimension mismatch"));
    }
    let (s, s_inv) = full_rank_sqrt_pair(rho)?;

    let completeness = ch.completeness_residual();
    let fixed_point = max_abs(&(ch.marginal(rho.matrix()) - rho.matrix()));

    // Detailed balance is self-adjointness of the Heisenberg-picture map N†:
    // gram[(a,b),(c,d)] = <E_ab, N†[E_cd]>_rho = (S N†[E_cd] S)_ab must be Hermitian.
    let n2 = d * d;
    let mut gram = CMatrix::zeros(n2, n2);
    let mut unit = CMatrix::zeros(d, d);
    for c in 0..d {
        for e in 0..d {
            unit[(c, e)] = num_complex::Complex64::new(1.0, 0.0);
            let w = &s * ch.adjoint_map(&unit) * &s;
            unit[(c, e)] = num_complex::Complex64::new(0.0, 0.0);
            for a in 0..d {
                for b in 0..d {
                    gram[(a * d + b, c * d + e)] = w[(a, b)];
                }
            }
        }
    }
    let kms_channel = max_abs(&(&gram - gram.adjoint()));

    let kraus_kms = |k: &CMatrix| max_abs(&(&s_inv * k * &s - k.adjoint()));
    let kms_kraus_1 = kraus_kms(&ch.kraus[1]);
    let kms_kraus_2 = kraus_kms(&ch.kraus[2]);

    let mut report = DetailedBalanceReport {
        observable: ch.observable_id.clone(),
        completeness,
        fixed_point,
        kms_channel,
        kms_kraus_1,
        kms_kraus_2,
        tol,
        passed: false,
    };
    report.passed = report.worst() <= tol;
    Ok(report)
}

/// `|Tr[D (A+†A+ - A-†A-)] - g(0) Tr[D A]|` for a state `D`; zero whenever
/// `D` is diagonal in the energy eigenbasis.
pub fn signal_identity_residual(ch: &MeasurementChannel, a: &HermitianOperator, state: &DensityMatrix) -> f64 {
    let scale = ch.c / (2.0 * ch.g0);
    let [_, e1, e2] = ch.effects();
    let lhs = trace_product(&(e1 - e2), state.matrix()).re / scale;
    let rhs = ch.g0 * a.expectation(state);
    (lhs - rhs).abs()
}
