//! Sequential measurement protocol over independent Gibbs copies.
//!
//! Each copy receives every observable's channel `ell` times in plan order;
//! the outcome labels form the transcript. Copies use independent ChaCha
//! streams keyed on `(seed, copy_index)`, so transcripts do not depend on
//! how many worker threads execute them.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{build_channel_with_spectrum, ChannelParams, MeasurementChannel, MIN_BRANCH_PROB};
use crate::error::{Error, Result};
use crate::operator::{eig_decompose, gibbs_state, trace_product, CMatrix, DensityMatrix, HermitianOperator, Spectrum};

/// Tolerance on `sum_i p_i = 1` before a step is declared corrupt.
pub const PROB_SUM_TOL: f64 = 1e-8;
/// Upper bound on `3^(channel count)` for exact marginal enumeration.
pub const MARGINAL_BUDGET: u64 = 1_000_000;

/// How conditional states are represented during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Start each copy in an energy eigenstate drawn from the Gibbs weights
    /// and propagate a state vector. Same outcome law as `Density`, since
    /// the Gibbs state is the corresponding mixture and every step is linear.
    #[default]
    PureEnsemble,
    /// Propagate the full conditional density matrix.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub observable_ids: Vec<String>,
    /// Repetitions per observable per copy.
    pub ell: usize,
    pub copies: usize,
    pub seed: u64,
    pub channel_params: ChannelParams,
    #[serde(default)]
    pub engine: Engine,
}

impl ProtocolPlan {
    pub fn validate(&self) -> Result<()> {
        if self.observable_ids.is_empty() {
            return Err(Error::input("plan needs at least one observable"));
        }
        if self.ell == 0 || self.copies == 0 {
            return Err(Error::input(format!(
                "ell and copies must be positive (ell = {}, copies = {})",
                self.ell, self.copies
            )));
        }
        Ok(())
    }

    pub fn observables(&self) -> usize {
        self.observable_ids.len()
    }

    pub fn record_count(&self) -> usize {
        self.copies * self.observables() * self.ell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub copy: usize,
    pub observable: usize,
    pub repetition: usize,
    pub label: u8,
}

/// All outcome labels of a protocol run, copy-major then observable then
/// repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub plan: ProtocolPlan,
    labels: Vec<u8>,
    pub rng_fingerprint: String,
}

/// JSON companion of the transcript CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSidecar {
    pub plan: ProtocolPlan,
    pub seed: u64,
    pub records: usize,
    pub rng_fingerprint: String,
}

fn fingerprint(plan: &ProtocolPlan, labels: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(b"dbshadow-transcript-v1");
    h.update(plan.seed.to_le_bytes());
    h.update((plan.copies as u64).to_le_bytes());
    h.update((plan.observables() as u64).to_le_bytes());
    h.update((plan.ell as u64).to_le_bytes());
    h.update(labels);
    hex::encode(h.finalize())
}

impl Transcript {
    pub fn from_labels(plan: ProtocolPlan, labels: Vec<u8>) -> Result<Self> {
        plan.validate()?;
        if labels.len() != plan.record_count() {
            return Err(Error::input(format!(
                "transcript has {} labels, plan requires {}",
                labels.len(),
                plan.record_count()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 2) {
            return Err(Error::input(format!("outcome label {bad} out of range")));
        }
        let rng_fingerprint = fingerprint(&plan, &labels);
        Ok(Self { plan, labels, rng_fingerprint })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Labels of one copy for one observable, in repetition order.
    pub fn block(&self, copy: usize, observable: usize) -> &[u8] {
        let ell = self.plan.ell;
        let start = (copy * self.plan.observables() + observable) * ell;
        &self.labels[start..start + ell]
    }

    pub fn records(&self) -> impl Iterator<Item = OutcomeRecord> + '_ {
        let m = self.plan.observables();
        let ell = self.plan.ell;
        self.labels.iter().enumerate().map(move |(idx, &label)| OutcomeRecord {
            copy: idx / (m * ell),
            observable: idx / ell % m,
            repetition: idx % ell,
            label,
        })
    }

    pub fn sidecar(&self) -> TranscriptSidecar {
        TranscriptSidecar {
            plan: self.plan.clone(),
            seed: self.plan.seed,
            records: self.len(),
            rng_fingerprint: self.rng_fingerprint.clone(),
        }
    }

    /// CSV with header `copy,observable,repetition,label`. `preamble` lines
    /// are written first as `# ` comments.
    pub fn write_csv<W: Write>(&self, mut out: W, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["copy", "observable", "repetition", "label"])?;
        for r in self.records() {
            w.serialize((r.copy, r.observable, r.repetition, r.label))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Transcript::write_csv`]; records must appear
    /// in execution order.
    pub fn read_csv<R: Read>(input: R, plan: ProtocolPlan) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut labels = Vec::with_capacity(plan.record_count());
        for (idx, row) in rdr.deserialize::<OutcomeRecord>().enumerate() {
            let r = row?;
            let m = plan.observables();
            let ell = plan.ell;
            let expect = (idx / (m * ell.max(1)), idx / ell.max(1) % m.max(1), idx % ell.max(1));
            if (r.copy, r.observable, r.repetition) != expect {
                return Err(Error::input(format!("transcript row {} out of execution order", idx + 1)));
            }
            labels.push(r.label);
        }
        Self::from_labels(plan, labels)
    }
}

/// RNG stream for one copy.
pub fn copy_rng(seed: u64, copy_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(copy_index as u64);
    rng
}

fn sample_label(probs: &[f64; 3], u: f64) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::numeric(format!(
            "outcome probabilities sum to {total:.12} (channel is not trace preserving)"
        )));
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p < MIN_BRANCH_PROB {
            continue;
        }
        acc += p;
        last = Some(i);
        if target < acc {
            return Ok(i);
        }
    }
    last.ok_or_else(|| Error::numeric("all outcome probabilities vanish"))
}

/// Runs one copy with density-matrix conditional states.
///
/// Returns the records (with `copy = copy_index`) and the final conditional
/// state.
pub fn run_copy<R: Rng>(
    rho: &DensityMatrix,
    channels: &[MeasurementChannel],
    ell: usize,
    copy_index: usize,
    rng: &mut R,
) -> Result<(Vec<OutcomeRecord>, DensityMatrix)> {
    let mut labels = Vec::with_capacity(channels.len() * ell);
    let fin = run_copy_density(rho, channels, ell, rng, &mut labels)?;
    let records = labels
        .iter()
        .enumerate()
        .map(|(idx, &label)| OutcomeRecord {
            copy: copy_index,
            observable: idx / ell.max(1),
            repetition: idx % ell.max(1),
            label,
        })
        .collect();
    Ok((records, fin))
}

fn run_copy_density<R: Rng>(
    rho: &DensityMatrix,
    channels: &[MeasurementChannel],
    ell: usize,
    rng: &mut R,
    labels: &mut Vec<u8>,
) -> Result<DensityMatrix> {
    for ch in channels {
        if ch.dim() != rho.dim() {
            return Err(Error::input(format!(
                "channel '{}' has dimension {}, state has {}",
                ch.observable_id,
                ch.dim(),
                rho.dim()
            )));
        }
    }
    let effects: Vec<[CMatrix; 3]> = channels.iter().map(|c| c.effects()).collect();
    let mut state = rho.matrix().clone();
    for (ch, eff) in channels.iter().zip(&effects) {
        for _ in 0..ell {
            let probs = [0, 1, 2].map(|i| trace_product(&eff[i], &state).re.max(0.0));
            let label = sample_label(&probs, rng.random::<f64>())
                .map_err(|e| e.context(format!("channel '{}'", ch.observable_id)))?;
            let k = &ch.kraus[label];
            let next = k * &state * k.adjoint();
            let tr = next.trace().re;
            state = (&next + next.adjoint()).scale(0.5 / tr);
            labels.push(label as u8);
        }
    }
    let min = DensityMatrix::from_matrix_unchecked(state.clone()).eigenvalues().first().copied().unwrap_or(0.0);
    if min < -1e-9 {
        return Err(Error::numeric(format!("conditional state lost positivity (eigenvalue {min:.3e})")));
    }
    Ok(DensityMatrix::from_matrix_unchecked(state))
}

/// Hamiltonian, Gibbs state and channels shared by all copies of a run.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub spectrum: Spectrum,
    pub rho: DensityMatrix,
    pub weights: Vec<f64>,
    pub channels: Vec<MeasurementChannel>,
}

impl PreparedSystem {
    /// Builds the Gibbs state once and one channel per observable.
    pub fn new(
        h: &HermitianOperator,
        observables: &[HermitianOperator],
        ids: &[String],
        params: &ChannelParams,
    ) -> Result<Self> {
        if observables.len() != ids.len() {
            return Err(Error::input("observable and id counts differ"));
        }
        let spectrum = eig_decompose(h)?;
        let rho = gibbs_state(&spectrum, params.beta)?;
        let weights = spectrum.gibbs_weights(params.beta)?;
        let channels = observables
            .iter()
            .zip(ids)
            .enumerate()
            .map(|(m, (a, id))| {
                build_channel_with_spectrum(a, &spectrum, params, id)
                    .map_err(|e| e.context(format!("observable {m} ('{id}')")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spectrum, rho, weights, channels })
    }
}

/// Kraus operators in the energy eigenbasis, row-major, for state-vector
/// propagation.
struct PureKernel {
    dim: usize,
    kraus: Vec<[Vec<Complex64>; 3]>,
    cdf: Vec<f64>,
}

impl PureKernel {
    fn new(sys: &PreparedSystem) -> Self {
        let dim = sys.rho.dim();
        let flat = |m: &CMatrix| -> Vec<Complex64> {
            let e = sys.spectrum.to_eigenbasis(m);
            (0..dim * dim).map(|k| e[(k / dim, k % dim)]).collect()
        };
        let kraus =
            sys.channels.iter().map(|ch| [flat(&ch.kraus[0]), flat(&ch.kraus[1]), flat(&ch.kraus[2])]).collect();
        let mut acc = 0.0;
        let cdf = sys
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { dim, kraus, cdf }
    }

    fn run<R: Rng>(&self, ell: usize, rng: &mut R, labels: &mut Vec<u8>, ids: &[String]) -> Result<()> {
        let d = self.dim;
        let u: f64 = rng.random::<f64>() * self.cdf[d - 1];
        let start = self.cdf.partition_point(|&c| c <= u).min(d - 1);
        let mut psi = vec![Complex64::new(0.0, 0.0); d];
        psi[start] = Complex64::new(1.0, 0.0);
        let mut branches =
            [vec![Complex64::new(0.0, 0.0); d], vec![Complex64::new(0.0, 0.0); d], vec![Complex64::new(0.0, 0.0); d]];
        for (m, ks) in self.kraus.iter().enumerate() {
            for _ in 0..ell {
                let mut probs = [0.0; 3];
                for (b, k) in ks.iter().enumerate() {
                    let out = &mut branches[b];
                    let mut norm = 0.0;
                    for r in 0..d {
                        let row = &k[r * d..(r + 1) * d];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (a, x) in row.iter().zip(&psi) {
                            acc += a * x;
                        }
                        out[r] = acc;
                        norm += acc.norm_sqr();
                    }
                    probs[b] = norm;
                }
                let label = sample_label(&probs, rng.random::<f64>())
                    .map_err(|e| e.context(format!("channel '{}'", ids[m])))?;
                let inv = 1.0 / probs[label].sqrt();
                for (p, v) in psi.iter_mut().zip(&branches[label]) {
                    *p = v * inv;
                }
                labels.push(label as u8);
            }
        }
        Ok(())
    }
}

/// Builds everything from scratch and runs the plan.
pub fn run_protocol(
    plan: &ProtocolPlan,
    h: &HermitianOperator,
    observables: &[HermitianOperator],
) -> Result<Transcript> {
    plan.validate()?;
    if observables.len() != plan.observables() {
        return Err(Error::input(format!(
            "plan lists {} observables, {} supplied",
            plan.observables(),
            observables.len()
        )));
    }
    let sys = PreparedSystem::new(h, observables, &plan.observable_ids, &plan.channel_params)?;
    run_prepared(plan, &sys)
}

/// Runs the plan against an already-built system. Copies execute on the
/// current rayon pool and are merged in copy order.
pub fn run_prepared(plan: &ProtocolPlan, sys: &PreparedSystem) -> Result<Transcript> {
    plan.validate()?;
    if sys.channels.len() != plan.observables() {
        return Err(Error::input("prepared system and plan disagree on observable count"));
    }
    let per_copy = plan.observables() * plan.ell;
    let ids = &plan.observable_ids;
    let blocks: Vec<Vec<u8>> = match plan.engine {
        Engine::PureEnsemble => {
            let kernel = PureKernel::new(sys);
            (0..plan.copies)
                .into_par_iter()
                .map(|j| {
                    let mut rng = copy_rng(plan.seed, j);
                    let mut labels = Vec::with_capacity(per_copy);
                    kernel.run(plan.ell, &mut rng, &mut labels, ids).map_err(|e| e.context(format!("copy {j}")))?;
                    Ok(labels)
                })
                .collect::<Result<_>>()?
        }
        Engine::Density => (0..plan.copies)
            .into_par_iter()
            .map(|j| {
                let mut rng = copy_rng(plan.seed, j);
                let mut labels = Vec::with_capacity(per_copy);
                run_copy_density(&sys.rho, &sys.channels, plan.ell, &mut rng, &mut labels)
                    .map_err(|e| e.context(format!("copy {j}")))?;
                Ok(labels)
            })
            .collect::<Result<_>>()?,
    };
    Transcript::from_labels(plan.clone(), blocks.concat())
}

/// Exact outcome distribution of the channel at `position` inside the full
/// sequence (all other outcomes marginalized), compared against measuring
/// that channel alone on `rho`. Returns the largest probability deviation.
pub fn marginal_check_exact(channels: &[MeasurementChannel], rho: &DensityMatrix, position: usize) -> Result<f64> {
    if position >= channels.len() {
        return Err(Error::input(format!("position {position} out of range for {} channels", channels.len())));
    }
    let sequences = 3u64.checked_pow(channels.len() as u32).unwrap_or(u64::MAX);
    if sequences > MARGINAL_BUDGET {
        return Err(Error::input(format!(
            "{} channels give {sequences} outcome sequences, above the budget of {MARGINAL_BUDGET}",
            channels.len()
        )));
    }
    if channels.iter().any(|c| c.dim() != rho.dim()) {
        return Err(Error::input("marginal_check_exact: dimension mismatch"));
    }
    let mut sigma = rho.matrix().clone();
    for ch in &channels[..position] {
        sigma = ch.marginal(&sigma);
    }
    let target = &channels[position];
    let mut worst: f64 = 0.0;
    for k in &target.kraus {
        let mut branch = k * &sigma * k.adjoint();
        for ch in &channels[position + 1..] {
            branch = ch.marginal(&branch);
        }
        let in_sequence = branch.trace().re;
        let alone = (k * rho.matrix() * k.adjoint()).trace().re;
        worst = worst.max((in_sequence - alone).abs());
    }
    Ok(worst)
}
