//! Classical sandbox for the sample-complexity lower bound: Boolean
//! Hamiltonians, their Gibbs distributions, distribution rounding, subset
//! realization, bin-splitting observables and the birthday coupling.

mod query;

pub use query::{
    grover_algorithm, haar_unitary, planted_zero_functions, query_sim_validate, random_algorithm, QueryAlgorithm,
    QueryReport, MAX_QUERIES, MAX_QUERY_BITS,
};

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest bit count for explicit bitstring-level distributions.
pub const MAX_BITS: usize = 24;

/// `f: {0,1}^n -> {0,1}` given by its zero set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanHamiltonian {
    n: usize,
    zero_set: Vec<u32>,
}

impl BooleanHamiltonian {
    pub fn new(n: usize, mut zero_set: Vec<u32>) -> Result<Self> {
        if n == 0 || n > MAX_BITS {
            return Err(Error::input(format!("n must lie in 1..={MAX_BITS}, got {n}")));
        }
        if zero_set.is_empty() {
            return Err(Error::input("zero set must be nonempty"));
        }
        let size = 1u64 << n;
        if let Some(&bad) = zero_set.iter().find(|&&b| u64::from(b) >= size) {
            return Err(Error::input(format!("bitstring {bad:#x} does not fit in {n} bits")));
        }
        zero_set.sort_unstable();
        if let Some(w) = zero_set.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::input(format!("bitstring {:#x} listed twice", w[0])));
        }
        Ok(Self { n, zero_set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn zero_set(&self) -> &[u32] {
        &self.zero_set
    }

    /// Number of zero-energy strings.
    pub fn k(&self) -> usize {
        self.zero_set.len()
    }

    pub fn size(&self) -> usize {
        1 << self.n
    }

    pub fn value(&self, b: u32) -> u8 {
        u8::from(self.zero_set.binary_search(&b).is_err())
    }

    /// Full truth table, index = bitstring.
    pub fn truth_table(&self) -> Vec<u8> {
        let mut t = vec![1u8; self.size()];
        for &z in &self.zero_set {
            t[z as usize] = 0;
        }
        t
    }

    /// Text form: `n k`, then one hex bitstring per line. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { source_name: source_name.to_string(), line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing `n k` header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, k] = fields[..] else {
            return Err(err(hl, format!("expected `n k`, found '{header}'")));
        };
        let n: usize = n.parse().map_err(|_| err(hl, format!("bad bit count '{n}'")))?;
        let k: usize = k.parse().map_err(|_| err(hl, format!("bad zero count '{k}'")))?;
        let mut zeros = Vec::with_capacity(k);
        for (ln, l) in lines {
            let digits = l.trim_start_matches("0x");
            let v = u32::from_str_radix(digits, 16).map_err(|_| err(ln, format!("bad hex bitstring '{l}'")))?;
            zeros.push(v);
        }
        if zeros.len() != k {
            return Err(err(hl, format!("header announces {k} bitstrings, found {}", zeros.len())));
        }
        Self::new(n, zeros).map_err(|e| err(hl, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let width = self.n.div_ceil(4);
        let mut out = format!("{} {}\n", self.n, self.k());
        for z in &self.zero_set {
            out.push_str(&format!("{z:0width$x}\n"));
        }
        out
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// `m` bins over `{0,1}^n`; bitstring `b` lands in `floor(b m / 2^n)`, which
/// yields contiguous bins whose sizes differ by at most one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPartition {
    pub n: usize,
    pub m: usize,
}

impl BinPartition {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n > 63 {
            return Err(Error::input(format!("n = {n} too large")));
        }
        if m == 0 || (m as u128) > (1u128 << n) {
            return Err(Error::input(format!("need 1 <= m <= 2^n, got m = {m}, n = {n}")));
        }
        Ok(Self { n, m })
    }

    fn total(&self) -> u128 {
        1u128 << self.n
    }

    pub fn bin_of(&self, b: u64) -> usize {
        ((b as u128 * self.m as u128) / self.total()) as usize
    }

    /// Bitstrings of bin `i`: `ceil(i 2^n / m) .. ceil((i+1) 2^n / m)`.
    pub fn bin_range(&self, i: usize) -> Range<u64> {
        let edge = |j: usize| (j as u128 * self.total()).div_ceil(self.m as u128) as u64;
        edge(i)..edge(i + 1)
    }

    pub fn sizes(&self) -> Vec<u64> {
        (0..self.m).map(|i| self.bin_range(i).end - self.bin_range(i).start).collect()
    }
}

/// A probability vector over bitstrings or bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedDistribution {
    probs: Vec<f64>,
}

impl InducedDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("distribution must be nonempty"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::input(format!("probability {p} is not a nonnegative number")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(len: usize) -> Self {
        Self { probs: vec![1.0 / len as f64; len] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Probabilities of a zero string and of a one string at inverse
/// temperature `beta` (possibly infinite) for `k` zeros among `2^n`.
pub fn gibbs_levels(n: usize, k: u64, beta: f64) -> Result<(f64, f64)> {
    let size = 2f64.powi(n as i32);
    if k == 0 || k as f64 > size {
        return Err(Error::input(format!("zero count {k} out of range for n = {n}")));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::input(format!("beta must be >= 0, got {beta}")));
    }
    let w = (-beta).exp();
    let z = k as f64 + (size - k as f64) * w;
    Ok((1.0 / z, w / z))
}

/// Closed-form total-variation distance between the Gibbs distribution at
/// `beta` and the uniform distribution over the zeros: `(2^n - k) e^{-beta} / Z`.
pub fn tv_to_ground_closed_form(n: usize, k: u64, beta: f64) -> Result<f64> {
    let (_, p_one) = gibbs_levels(n, k, beta)?;
    Ok((2f64.powi(n as i32) - k as f64) * p_one)
}

/// Gibbs distribution over all `2^n` strings; `beta = inf` gives the
/// uniform distribution over the zero set.
pub fn classical_gibbs(f: &BooleanHamiltonian, beta: f64) -> Result<InducedDistribution> {
    let (p0, p1) = gibbs_levels(f.n, f.k() as u64, beta)?;
    let mut probs = vec![p1; f.size()];
    for &z in &f.zero_set {
        probs[z as usize] = p0;
    }
    Ok(InducedDistribution { probs })
}

pub fn tv_distance(p: &InducedDistribution, q: &InducedDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::input(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Slack absorbing binary rounding of exact grid points (`0.29 * 100`)
/// before flooring.
const GRID_SLACK: f64 = 1e-9;

/// Integer counts of [`round_distribution`]; they sum to exactly `k`.
pub fn round_counts(p: &InducedDistribution, k: u64) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::input("K must be >= 1"));
    }
    let mut counts = Vec::with_capacity(p.len());
    let mut cum = 0.0;
    let mut prev: u64 = 0;
    for (i, &pi) in p.probs.iter().enumerate() {
        let upto = if i + 1 == p.len() {
            k
        } else {
            cum += pi;
            ((cum * k as f64 + GRID_SLACK).floor().max(0.0) as u64).clamp(prev, k)
        };
        counts.push(upto - prev);
        prev = upto;
    }
    Ok(counts)
}

/// Rounds onto the `1/K` grid: partial sums become `floor(K * partial)/K`
/// and the last entry takes up the remainder.
pub fn round_distribution(p: &InducedDistribution, k: u64) -> Result<InducedDistribution> {
    let counts = round_counts(p, k)?;
    Ok(InducedDistribution { probs: counts.iter().map(|&c| c as f64 / k as f64).collect() })
}

/// Draws `K q_i` distinct strings uniformly from each bin `i`; the result's
/// zero set realizes `q` exactly as bin frequencies.
pub fn realize_subset<R: Rng>(
    q: &InducedDistribution,
    partition: &BinPartition,
    k: u64,
    rng: &mut R,
) -> Result<BooleanHamiltonian> {
    if q.len() != partition.m {
        return Err(Error::input(format!("q has {} entries, partition has {} bins", q.len(), partition.m)));
    }
    if partition.n > MAX_BITS {
        return Err(Error::input(format!("n = {} exceeds {MAX_BITS}", partition.n)));
    }
    let mut zeros = Vec::with_capacity(k as usize);
    for (i, &qi) in q.probs.iter().enumerate() {
        let want = qi * k as f64;
        let count = want.round();
        if (want - count).abs() > 1e-9 {
            return Err(Error::input(format!("K*q[{i}] = {want} is not an integer")));
        }
        let range = partition.bin_range(i);
        let cap = range.end - range.start;
        if count as u64 > cap {
            return Err(Error::input(format!("bin {i} holds {cap} strings, {count} requested")));
        }
        for off in sample(rng, cap as usize, count as usize) {
            zeros.push((range.start + off as u64) as u32);
        }
    }
    BooleanHamiltonian::new(partition.n, zeros)
}

/// Zero counts per bin, `|I ∩ B_i|`.
pub fn bin_counts(f: &BooleanHamiltonian, partition: &BinPartition) -> Result<Vec<u64>> {
    if f.n != partition.n {
        return Err(Error::input("partition and Hamiltonian disagree on n"));
    }
    let mut counts = vec![0u64; partition.m];
    for &z in &f.zero_set {
        counts[partition.bin_of(u64::from(z))] += 1;
    }
    Ok(counts)
}

/// `p'_i = |I ∩ B_i| / |I|`.
pub fn induced_bin_distribution(f: &BooleanHamiltonian, partition: &BinPartition) -> Result<InducedDistribution> {
    let counts = bin_counts(f, partition)?;
    let k = f.k() as f64;
    Ok(InducedDistribution { probs: counts.iter().map(|&c| c as f64 / k).collect() })
}

/// `E[O_b] = sum_l b_l p_l` for the bin-indicator observable selected by `b`.
pub fn splitting_expectation(b: &[bool], p: &InducedDistribution) -> Result<f64> {
    if b.len() != p.len() {
        return Err(Error::input(format!("selector has {} bits, distribution {} bins", b.len(), p.len())));
    }
    Ok(b.iter().zip(&p.probs).filter(|(&on, _)| on).map(|(_, &x)| x).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub samples: u64,
    pub set_size: u64,
    pub trials: usize,
    pub empirical: f64,
    pub standard_error: f64,
    /// `min(S^2 / 2K, 1)`.
    pub bound: f64,
    /// `1 - prod_{i<S} (1 - i/K)`.
    pub exact: f64,
}

/// Exact probability that `s` uniform draws from a `k`-set repeat a value.
pub fn birthday_probability(s: u64, k: u64) -> f64 {
    if s > k {
        return 1.0;
    }
    let log_none: f64 = (1..s).map(|i| (-(i as f64) / k as f64).ln_1p()).sum();
    -log_none.exp_m1()
}

pub fn collision_probability<R: Rng>(s: u64, k: u64, trials: usize, rng: &mut R) -> Result<CollisionStats> {
    if s == 0 || k == 0 || trials == 0 {
        return Err(Error::input("S, K and trials must be positive"));
    }
    let mut seen = HashSet::with_capacity(s as usize);
    let mut hits = 0usize;
    for _ in 0..trials {
        seen.clear();
        if (0..s).any(|_| !seen.insert(rng.random_range(0..k))) {
            hits += 1;
        }
    }
    let empirical = hits as f64 / trials as f64;
    Ok(CollisionStats {
        samples: s,
        set_size: k,
        trials,
        empirical,
        standard_error: (empirical * (1.0 - empirical) / trials as f64).sqrt(),
        bound: ((s as f64).powi(2) / (2.0 * k as f64)).min(1.0),
        exact: birthday_probability(s, k),
    })
}

/// `2 T sqrt(max_b Pr[f(b) != f0(b)])`.
pub fn hybrid_bound(flip_probs: &[f64], queries: usize) -> Result<f64> {
    if let Some(p) = flip_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::input(format!("flip probability {p} outside [0, 1]")));
    }
    let worst = flip_probs.iter().copied().fold(0.0, f64::max);
    Ok(2.0 * queries as f64 * worst.sqrt())
}
