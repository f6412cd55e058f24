//! Detailed-balance measurement channels.
//!
//! A channel for observable `A` has three Kraus operators: `K1`, `K2` are
//! scaled polarizations `(I ± Â)/2` of the filtered observable `Â`, and `K0`
//! is the rejection operator that completes the channel while keeping the
//! Gibbs state fixed. Outcome 1 minus outcome 2 probability, rescaled by
//! `2/c`, is an unbiased estimate of `Tr[rho A]`.

mod bohr;
mod filter;
mod verify;

pub use bohr::{bohr_decompose, operator_fourier_transform, reassembly_residual, BohrDecomposition, BohrGroup};
pub use filter::{filter_weight, GaussianFilter};
pub use verify::{signal_identity_residual, verify_detailed_balance, DetailedBalanceReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    eig_decompose, max_abs, operator_norm, psd_sqrt, trace_product, CMatrix, DensityMatrix, HermitianOperator,
    Spectrum, RANK_TOL,
};

/// Tolerance on `||A|| <= 1` and on the Kraus norm bounds.
pub const NORM_SLACK: f64 = 1e-9;
/// Required completeness `||sum K†K - I||_max`.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Outcomes below this probability are treated as impossible.
pub const MIN_BRANCH_PROB: f64 = 1e-14;
/// `beta * (E_max - E_min)` above which `rho^{-1/2}` is considered badly
/// conditioned.
pub const CONDITIONING_WARN: f64 = 20.0;

/// Parameters shared by every channel in one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub beta: f64,
    pub sigma: f64,
    pub c: f64,
    /// Bohr grouping tolerance; `None` means `1e-9 * ||H||`.
    #[serde(default)]
    pub group_tol: Option<f64>,
}

impl ChannelParams {
    /// `sigma = 1` and the largest `c <= 0.5` for which the rejection
    /// operator exists.
    pub fn with_defaults(beta: f64) -> Self {
        let sigma = 1.0;
        Self { beta, sigma, c: default_c(sigma), group_tol: None }
    }
}

/// `min(0.5, 2 g(0))`.
pub fn default_c(sigma: f64) -> f64 {
    let g0 = (-1.0 / (8.0 * sigma * sigma)).exp();
    0.5f64.min(2.0 * g0)
}

#[derive(Debug, Clone)]
pub struct MeasurementChannel {
    /// `[K0, K1, K2]` in the computational basis.
    pub kraus: [CMatrix; 3],
    pub c: f64,
    /// `Re g(0)` of the configured filter.
    pub g0: f64,
    pub sigma: f64,
    pub beta: f64,
    pub observable_id: String,
    /// `beta * (E_max - E_min)`; large values mean `rho^{-1/2}` amplifies
    /// rounding error.
    pub conditioning: f64,
}

impl MeasurementChannel {
    pub fn dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// `K_i† K_i` for each outcome.
    pub fn effects(&self) -> [CMatrix; 3] {
        self.kraus.clone().map(|k| k.adjoint() * k)
    }

    pub fn completeness_residual(&self) -> f64 {
        let [e0, e1, e2] = self.effects();
        max_abs(&(e0 + e1 + e2 - CMatrix::identity(self.dim(), self.dim())))
    }

    /// Outcome-marginalized channel `sum_i K_i X K_i†`.
    pub fn marginal(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    /// Adjoint (Heisenberg) map `sum_i K_i† X K_i`.
    pub fn adjoint_map(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(x.nrows(), x.ncols());
        for k in &self.kraus {
            out += k.adjoint() * x * k;
        }
        out
    }

    pub fn conditioning_warning(&self) -> Option<String> {
        (self.conditioning > CONDITIONING_WARN).then(|| {
            format!(
                "channel '{}': beta*spectral width = {:.1}; rho^(-1/2) amplifies rounding by ~exp({:.1})",
                self.observable_id,
                self.conditioning,
                self.conditioning / 2.0
            )
        })
    }

    /// Same channel with one Kraus operator multiplied by `factor`. Used by
    /// negative controls; the result is generally not trace preserving.
    pub fn with_scaled_kraus(&self, index: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.kraus[index] = out.kraus[index].scale(factor);
        out
    }
}

/// Polarizations `A± = (I ± Â)/2`.
pub fn polarize(a_hat: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let d = a_hat.nrows();
    let norm = operator_norm(a_hat);
    if norm > 1.0 + NORM_SLACK {
        return Err(Error::construction(format!("||Â_f|| = {norm:.12} exceeds 1")));
    }
    let id = CMatrix::identity(d, d);
    let plus = (&id + a_hat).scale(0.5);
    let minus = (&id - a_hat).scale(0.5);
    for (name, m) in [("A+", &plus), ("A-", &minus)] {
        let n = operator_norm(m);
        if n > 1.0 + NORM_SLACK {
            return Err(Error::construction(format!("||{name}|| = {n:.12} exceeds 1")));
        }
    }
    Ok((plus, minus))
}

/// Builds the channel for observable `a` against Hamiltonian `h`.
pub fn build_channel(
    a: &HermitianOperator,
    h: &HermitianOperator,
    params: &ChannelParams,
    observable_id: &str,
) -> Result<MeasurementChannel> {
    let spec = eig_decompose(h)?;
    build_channel_with_spectrum(a, &spec, params, observable_id)
}

fn validate_params(params: &ChannelParams) -> Result<()> {
    if !params.beta.is_finite() || params.beta < 0.0 {
        return Err(Error::input(format!("beta must be finite and >= 0, got {}", params.beta)));
    }
    if !(params.c > 0.0 && params.c <= 1.0) {
        return Err(Error::input(format!("c must lie in (0, 1], got {}", params.c)));
    }
    Ok(())
}

/// [`build_channel`] reusing an existing eigen-decomposition of `H`.
pub fn build_channel_with_spectrum(
    a: &HermitianOperator,
    spec: &Spectrum,
    params: &ChannelParams,
    observable_id: &str,
) -> Result<MeasurementChannel> {
    validate_params(params)?;
    let d = spec.dim();
    let a_norm = a.norm();
    if a_norm > 1.0 + NORM_SLACK {
        return Err(Error::input(format!("observable '{observable_id}' has norm {a_norm:.6} > 1")));
    }
    let filter = GaussianFilter::new(params.beta, params.sigma)?;
    let g0 = filter.weight_at_zero();
    // T = (c / (2 g0)) (A+ . A+† + A- . A-†); T†[I] <= c/(2 g0) I.
    let scale = params.c / (2.0 * g0);
    if scale > 1.0 {
        return Err(Error::construction(format!(
            "c = {} too large for sigma = {}: need c <= 2 g(0) = {:.6} for the rejection operator to exist",
            params.c,
            params.sigma,
            2.0 * g0
        )));
    }

    let tol = params.group_tol.unwrap_or_else(|| {
        let hn = spec.norm();
        if hn > 0.0 {
            1e-9 * hn
        } else {
            1e-12
        }
    });
    let decomp = bohr_decompose(a, spec, tol)?;
    let a_hat = decomp.filtered_eigen(&filter);
    let a_hat_norm = operator_norm(&a_hat);
    if a_hat_norm > a_norm + NORM_SLACK {
        return Err(Error::construction(format!(
            "filtered observable norm {a_hat_norm:.12} exceeds ||A|| = {a_norm:.12}"
        )));
    }
    let (plus, minus) = polarize(&a_hat)?;
    let root = scale.sqrt();
    let k1 = plus.scale(root);
    let k2 = minus.scale(root);

    let c_bound = params.c + NORM_SLACK;
    for (name, k) in [("K1", &k1), ("K2", &k2)] {
        let n = operator_norm(&(k.adjoint() * k));
        if n > c_bound {
            return Err(Error::construction(format!(
                "||{name}†{name}|| = {n:.6} exceeds c = {}; increase sigma",
                params.c
            )));
        }
    }

    // Rejection operator in the eigenbasis, where rho is diagonal.
    let weights = spec.gibbs_weights(params.beta)?;
    let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    if !(w_min > RANK_TOL * w_max) {
        return Err(Error::numeric(format!(
            "Gibbs state is numerically singular (weight ratio {:.3e} < {RANK_TOL:e}); use a smaller beta*||H||",
            w_min / w_max
        )));
    }
    let transition_dual = k1.adjoint() * &k1 + k2.adjoint() * &k2;
    let rest = CMatrix::identity(d, d) - transition_dual;
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let sandwiched = CMatrix::from_fn(d, d, |i, j| rest[(i, j)] * (sqrt_w[i] * sqrt_w[j]));
    let root_x = psd_sqrt(&sandwiched)?;
    let k0 = CMatrix::from_fn(d, d, |i, j| root_x[(i, j)] / sqrt_w[j]);

    let to_comp = |m: &CMatrix| spec.from_eigenbasis(m);
    let channel = MeasurementChannel {
        kraus: [to_comp(&k0), to_comp(&k1), to_comp(&k2)],
        c: params.c,
        g0,
        sigma: params.sigma,
        beta: params.beta,
        observable_id: observable_id.to_string(),
        conditioning: params.beta * (spec.max() - spec.min()),
    };
    let resid = channel.completeness_residual();
    if resid > COMPLETENESS_TOL {
        return Err(Error::numeric(format!(
            "channel '{observable_id}' completeness residual {resid:.3e} exceeds {COMPLETENESS_TOL:e}; \
             use a smaller beta*||H||"
        )));
    }
    Ok(channel)
}

/// Result of one measurement: outcome probabilities and normalized
/// post-measurement states (`None` for outcomes with probability below
/// [`MIN_BRANCH_PROB`]).
#[derive(Debug, Clone)]
pub struct ChannelOutput {
    pub probs: [f64; 3],
    pub post_states: [Option<DensityMatrix>; 3],
}

pub fn apply_channel(ch: &MeasurementChannel, rho: &DensityMatrix) -> Result<ChannelOutput> {
    if rho.dim() != ch.dim() {
        return Err(Error::input(format!(
            "state dimension {} does not match channel dimension {}",
            rho.dim(),
            ch.dim()
        )));
    }
    let mut probs = [0.0; 3];
    let mut post: [Option<DensityMatrix>; 3] = [None, None, None];
    for (i, k) in ch.kraus.iter().enumerate() {
        let branch = k * rho.matrix() * k.adjoint();
        let p = branch.trace().re;
        probs[i] = p.max(0.0);
        if p >= MIN_BRANCH_PROB {
            let m = branch.unscale(p);
            post[i] = Some(DensityMatrix::from_matrix_unchecked((&m + m.adjoint()).scale(0.5)));
        }
    }
    Ok(ChannelOutput { probs, post_states: post })
}

/// `(2/c) (Tr[K1†K1 rho] - Tr[K2†K2 rho])`.
pub fn exact_signal(ch: &MeasurementChannel, rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != ch.dim() {
        return Err(Error::input("exact_signal: dimension mismatch"));
    }
    let [_, e1, e2] = ch.effects();
    let p1 = trace_product(&e1, rho.matrix()).re;
    let p2 = trace_product(&e2, rho.matrix()).re;
    Ok(2.0 / ch.c * (p1 - p2))
}
