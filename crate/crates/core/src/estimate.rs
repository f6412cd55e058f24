//! Estimators over transcripts, sample-size calculators and the
//! bounded-increment tail oracle.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Transcript;

/// Block means are clipped to `[-DEFAULT_CLIP, DEFAULT_CLIP]`.
pub const DEFAULT_CLIP: f64 = 4.0;

/// Value of one outcome: `+2/c`, `-2/c` or `0`.
pub fn outcome_to_sample(label: u8, c: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::input(format!("c must lie in (0, 1], got {c}")));
    }
    match label {
        0 => Ok(0.0),
        1 => Ok(2.0 / c),
        2 => Ok(-2.0 / c),
        other => Err(Error::input(format!("outcome label {other} not in {{0,1,2}}"))),
    }
}

pub fn block_mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("block_mean of an empty block"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean of a label block without materializing samples.
pub fn label_block_mean(labels: &[u8], c: f64) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::input("block_mean of an empty block"));
    }
    let mut net: i64 = 0;
    for &l in labels {
        match l {
            0 => {}
            1 => net += 1,
            2 => net -= 1,
            other => return Err(Error::input(format!("outcome label {other} not in {{0,1,2}}"))),
        }
    }
    outcome_to_sample(1, c).map(|v| v * net as f64 / labels.len() as f64)
}

pub fn truncated_mean_estimate(block_means: &[f64], clip: f64) -> Result<f64> {
    if block_means.is_empty() {
        return Err(Error::input("truncated mean of an empty list"));
    }
    if !(clip > 0.0) {
        return Err(Error::input(format!("clip must be positive, got {clip}")));
    }
    Ok(block_means.iter().map(|x| x.clamp(-clip, clip)).sum::<f64>() / block_means.len() as f64)
}

/// Median of `groups` consecutive group means. Trailing values that do not
/// fill a group are dropped; for even `groups` the two central group means
/// are averaged.
pub fn median_of_means(block_means: &[f64], groups: usize) -> Result<f64> {
    if groups == 0 || groups > block_means.len() {
        return Err(Error::input(format!("cannot form {groups} groups from {} values", block_means.len())));
    }
    let size = block_means.len() / groups;
    let mut means: Vec<f64> =
        block_means.chunks_exact(size).take(groups).map(|g| g.iter().sum::<f64>() / size as f64).collect();
    means.sort_by(f64::total_cmp);
    let mid = groups / 2;
    Ok(if groups % 2 == 1 { means[mid] } else { 0.5 * (means[mid - 1] + means[mid]) })
}

/// Copies needed for a Chernoff-Hoeffding guarantee at worst-case mean 1.
pub fn sample_size_chernoff(epsilon: f64, delta: f64) -> Result<usize> {
    check_unit("epsilon", epsilon)?;
    check_unit("delta", delta)?;
    let k = (2.0 * (2.0 / delta).ln() * (1.0 + epsilon) / (epsilon * epsilon)).ceil();
    Ok((k as usize).max(1))
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must lie in (0, 1), got {x}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    MeanOfTruncatedBlockMeans,
    MedianOfMeans,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MeanOfTruncatedBlockMeans => "mean-of-truncated-block-means",
            Method::MedianOfMeans => "median-of-means",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-of-truncated-block-means" | "truncated" => Ok(Method::MeanOfTruncatedBlockMeans),
            "median-of-means" | "mom" => Ok(Method::MedianOfMeans),
            other => Err(Error::input(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Tail parameter for the block-mean clipping step:
/// `min(delta * eps^2 / (8 ln(2/delta)), 1/4)`.
pub fn default_eta(epsilon: f64, delta: f64) -> f64 {
    (delta * epsilon * epsilon / (8.0 * (2.0 / delta).ln())).min(0.25)
}

/// Smallest block length with `Pr[|s| >= 4] <= eta`: `ceil((8/3) ln(2/eta) / c)`.
pub fn default_ell(eta: f64, c: f64) -> usize {
    ((8.0 / 3.0) * (2.0 / eta).ln() / c).ceil().max(1.0) as usize
}

/// Second-moment bound `8 + 8/(c ell)` on a block mean.
pub fn block_second_moment_bound(c: f64, ell: usize) -> f64 {
    8.0 + 8.0 / (c * ell as f64)
}

/// Sample sizes for estimating `observables` expectations simultaneously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sizing {
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub observables: usize,
    pub c: f64,
    /// Failure budget per observable, `delta / observables`.
    pub per_observable_delta: f64,
    pub eta: f64,
    pub ell: usize,
    pub second_moment: f64,
    /// Number of median-of-means groups (1 for the truncated mean).
    pub groups: usize,
    pub copies: usize,
}

/// Sizing for a given block length.
pub fn sizing_for_ell(
    method: Method,
    epsilon: f64,
    delta: f64,
    observables: usize,
    c: f64,
    ell: usize,
) -> Result<Sizing> {
    check_unit("epsilon", epsilon)?;
    check_unit("delta", delta)?;
    if observables == 0 {
        return Err(Error::input("need at least one observable"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::input(format!("c must lie in (0, 1], got {c}")));
    }
    if ell == 0 {
        return Err(Error::input("ell must be positive"));
    }
    let dp = delta / observables as f64;
    let eta = default_eta(epsilon, dp);
    let v = block_second_moment_bound(c, ell);
    let log = (2.0 / dp).ln();
    let (groups, copies) = match method {
        Method::MeanOfTruncatedBlockMeans => {
            let t = epsilon - eta;
            let r = ((2.0 * v + (8.0 / 3.0) * t) * log / (t * t)).ceil() as usize;
            (1, r)
        }
        Method::MedianOfMeans => {
            let k = (2.0 * log).ceil() as usize;
            let n = (34.0 * v / (epsilon * epsilon)).ceil() as usize;
            (k, k * n)
        }
    };
    Ok(Sizing {
        method,
        epsilon,
        delta,
        observables,
        c,
        per_observable_delta: dp,
        eta,
        ell,
        second_moment: v,
        groups,
        copies: copies.max(1),
    })
}

/// Sizing with the default block length.
pub fn plan_sizing(method: Method, epsilon: f64, delta: f64, observables: usize, c: f64) -> Result<Sizing> {
    check_unit("epsilon", epsilon)?;
    check_unit("delta", delta)?;
    if observables == 0 {
        return Err(Error::input("need at least one observable"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::input(format!("c must lie in (0, 1], got {c}")));
    }
    let ell = default_ell(default_eta(epsilon, delta / observables as f64), c);
    sizing_for_ell(method, epsilon, delta, observables, c, ell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub observable_id: String,
    pub estimate: f64,
    pub method: Method,
    pub ell: usize,
    pub copies: usize,
    pub claimed_epsilon: f64,
    pub claimed_delta: f64,
    /// Ground truth when the caller can compute it.
    #[serde(default)]
    pub exact: Option<f64>,
}

impl EstimatorReport {
    pub fn abs_error(&self) -> Option<f64> {
        self.exact.map(|e| (self.estimate - e).abs())
    }
}

/// Estimates every observable of the transcript at accuracy `epsilon`
/// with joint failure probability `delta`.
pub fn estimate_all(transcript: &Transcript, method: Method, epsilon: f64, delta: f64) -> Result<Vec<EstimatorReport>> {
    let plan = &transcript.plan;
    let c = plan.channel_params.c;
    let m = plan.observables();
    let sizing = sizing_for_ell(method, epsilon, delta, m, c, plan.ell)?;
    if method == Method::MeanOfTruncatedBlockMeans {
        let need = default_ell(sizing.eta, c);
        if plan.ell < need {
            return Err(Error::input(format!(
                "block length {} too short for clipping at (eps={epsilon}, delta={delta}, M={m}); need ell >= {need}",
                plan.ell
            )));
        }
    }
    if plan.copies < sizing.copies {
        return Err(Error::input(format!(
            "transcript has {} copies; (eps={epsilon}, delta={delta}, M={m}, ell={}) requires r >= {}",
            plan.copies, plan.ell, sizing.copies
        )));
    }
    (0..m)
        .map(|obs| {
            let means =
                (0..plan.copies).map(|j| label_block_mean(transcript.block(j, obs), c)).collect::<Result<Vec<_>>>()?;
            let estimate = match method {
                Method::MeanOfTruncatedBlockMeans => truncated_mean_estimate(&means, DEFAULT_CLIP)?,
                Method::MedianOfMeans => median_of_means(&means, sizing.groups)?,
            };
            Ok(EstimatorReport {
                observable_id: plan.observable_ids[obs].clone(),
                estimate,
                method,
                ell: plan.ell,
                copies: plan.copies,
                claimed_epsilon: epsilon,
                claimed_delta: delta,
                exact: None,
            })
        })
        .collect()
}

/// CSV with header `observable,estimate,exact,abs_error,method,ell,copies`,
/// after `# ` preamble lines.
pub fn write_estimates_csv<W: Write>(reports: &[EstimatorReport], mut out: W, preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["observable", "estimate", "exact", "abs_error", "method", "ell", "copies"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for r in reports {
        w.write_record([
            r.observable_id.clone(),
            format!("{:.12e}", r.estimate),
            opt(r.exact),
            opt(r.abs_error()),
            r.method.as_str().to_string(),
            r.ell.to_string(),
            r.copies.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-observable rates of labels 1 and 2 against the bound `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRate {
    pub observable_id: String,
    pub rate_plus: f64,
    pub rate_minus: f64,
    pub standard_error: f64,
    pub passed: bool,
}

/// Label-1 and label-2 frequencies never exceed `c` by more than five
/// standard errors.
pub fn label_rate_check(transcript: &Transcript) -> Vec<LabelRate> {
    let plan = &transcript.plan;
    let c = plan.channel_params.c;
    let n = (plan.copies * plan.ell) as f64;
    let se = (c * (1.0 - c) / n).sqrt();
    (0..plan.observables())
        .map(|obs| {
            let mut counts = [0usize; 3];
            for j in 0..plan.copies {
                for &l in transcript.block(j, obs) {
                    counts[l as usize] += 1;
                }
            }
            let rate_plus = counts[1] as f64 / n;
            let rate_minus = counts[2] as f64 / n;
            LabelRate {
                observable_id: plan.observable_ids[obs].clone(),
                rate_plus,
                rate_minus,
                standard_error: se,
                passed: rate_plus <= c + 5.0 * se && rate_minus <= c + 5.0 * se,
            }
        })
        .collect()
}

/// Conditional-probability policies for the bounded-increment process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    /// `Pr[+] = Pr[-] = min(c, 1/2)` at every step.
    SymmetricSaturating,
    /// `Pr[+] = c`, `Pr[-] = 0`.
    OneSided,
    /// Saturates whichever sign the running sum already has.
    Chasing,
}

impl Adversary {
    pub const ALL: [Adversary; 3] = [Adversary::SymmetricSaturating, Adversary::OneSided, Adversary::Chasing];

    fn probs(self, c: f64, partial: i64) -> (f64, f64) {
        match self {
            Adversary::SymmetricSaturating => {
                let p = c.min(0.5);
                (p, p)
            }
            Adversary::OneSided => (c, 0.0),
            Adversary::Chasing if partial >= 0 => (c, 0.0),
            Adversary::Chasing => (0.0, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub adversary: Adversary,
    pub k: usize,
    pub c: f64,
    pub trials: usize,
    /// Empirical `E[S_k^2]` and its standard error.
    pub mean_square: f64,
    pub mean_square_se: f64,
    /// `8 + 8/(c k)`.
    pub mean_square_bound: f64,
    /// Empirical `Pr[|S_k| >= 4]` and its standard error.
    pub tail_prob: f64,
    pub tail_prob_se: f64,
    /// Empirical `E[|S_k| - min(4, |S_k|)]`.
    pub excess_mean: f64,
    /// Steps where the process indicator exceeded its Bernoulli(c) partner.
    pub coupling_violations: usize,
    /// Trials where the positive count exceeded the dominating binomial.
    pub domination_violations: usize,
}

/// Simulates `trials` runs of `k` steps of a `{-2/c, 0, 2/c}` process with
/// adversarial conditional probabilities, each step driven by one uniform
/// `U_i` that also defines the dominating Bernoulli `1{U_i <= c}` (and the
/// mirrored `1{U_i > 1 - c}` for negative steps).
pub fn tail_oracle_binomial<R: Rng>(
    k: usize,
    c: f64,
    trials: usize,
    adversary: Adversary,
    rng: &mut R,
) -> Result<TailStats> {
    if k == 0 || trials == 0 {
        return Err(Error::input("k and trials must be positive"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::input(format!("c must lie in (0, 1], got {c}")));
    }
    let step = 2.0 / c;
    let mut sum_sq = 0.0;
    let mut sum_sq2 = 0.0;
    let mut tail = 0usize;
    let mut excess = 0.0;
    let mut coupling_violations = 0;
    let mut domination_violations = 0;
    for _ in 0..trials {
        let mut partial: i64 = 0;
        let (mut pos, mut neg, mut bern_pos, mut bern_neg) = (0usize, 0usize, 0usize, 0usize);
        for _ in 0..k {
            let (pp, pm) = adversary.probs(c, partial);
            let u: f64 = rng.random();
            let z_pos = u <= pp;
            let z_neg = !z_pos && u > 1.0 - pm;
            let b_pos = u <= c;
            let b_neg = u > 1.0 - c;
            if (z_pos && !b_pos) || (z_neg && !b_neg) {
                coupling_violations += 1;
            }
            pos += z_pos as usize;
            neg += z_neg as usize;
            bern_pos += b_pos as usize;
            bern_neg += b_neg as usize;
            partial += z_pos as i64 - z_neg as i64;
        }
        if pos > bern_pos || neg > bern_neg {
            domination_violations += 1;
        }
        let s = step * partial as f64 / k as f64;
        let s2 = s * s;
        sum_sq += s2;
        sum_sq2 += s2 * s2;
        if s.abs() >= 4.0 {
            tail += 1;
        }
        excess += s.abs() - s.abs().min(4.0);
    }
    let n = trials as f64;
    let mean_square = sum_sq / n;
    let var_sq = (sum_sq2 / n - mean_square * mean_square).max(0.0);
    let tail_prob = tail as f64 / n;
    Ok(TailStats {
        adversary,
        k,
        c,
        trials,
        mean_square,
        mean_square_se: (var_sq / n).sqrt(),
        mean_square_bound: 8.0 + 8.0 / (c * k as f64),
        tail_prob,
        tail_prob_se: (tail_prob * (1.0 - tail_prob) / n).sqrt(),
        excess_mean: excess / n,
        coupling_violations,
        domination_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianOfMeansTrial {
    pub epsilon: f64,
    pub delta: f64,
    pub groups: usize,
    pub group_size: usize,
    pub trials: usize,
    pub failure_rate: f64,
    pub failure_se: f64,
    /// `2 exp(-K/2)`.
    pub bound: f64,
}

/// Median-of-means on standard normal data with `N = ceil(34/eps^2)` per
/// group and `K = ceil(2 ln(2/delta))` groups; counts `|estimate| >= eps`.
pub fn median_of_means_trials<R: Rng>(
    epsilon: f64,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<MedianOfMeansTrial> {
    check_unit("epsilon", epsilon)?;
    check_unit("delta", delta)?;
    if trials == 0 {
        return Err(Error::input("trials must be positive"));
    }
    let groups = (2.0 * (2.0 / delta).ln()).ceil() as usize;
    let group_size = (34.0 / (epsilon * epsilon)).ceil() as usize;
    let mut data = vec![0.0; groups * group_size];
    let mut failures = 0usize;
    for _ in 0..trials {
        for x in data.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        if median_of_means(&data, groups)?.abs() >= epsilon {
            failures += 1;
        }
    }
    let rate = failures as f64 / trials as f64;
    Ok(MedianOfMeansTrial {
        epsilon,
        delta,
        groups,
        group_size,
        trials,
        failure_rate: rate,
        failure_se: (rate * (1.0 - rate) / trials as f64).sqrt(),
        bound: 2.0 * (-(groups as f64) / 2.0).exp(),
    })
}
