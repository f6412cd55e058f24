use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::LowerboundConfig;
use super::{derive_seed, ReportHeader};
use crate::error::Result;
use crate::lowerbound::{
    bin_counts, classical_gibbs, collision_probability, grover_algorithm, planted_zero_functions, query_sim_validate,
    random_algorithm, realize_subset, round_counts, tv_distance, tv_to_ground_closed_form, BinPartition,
    BooleanHamiltonian, CollisionStats, InducedDistribution, QueryReport,
};
use crate::trajectory::copy_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSweep {
    pub cases: usize,
    pub checked: usize,
    /// Cases whose `beta` is below `n ln 2 + r`; the bound does not apply.
    pub skipped: usize,
    pub violations: usize,
    /// Cases where the explicit sum and the closed form differ by > 1e-12.
    pub closed_form_mismatches: usize,
    /// Largest `TV / e^{-r}` over checked cases.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingCheck {
    pub trials: usize,
    pub violations: usize,
    /// Trials in which entrywise-ceiling rounding broke an invariant; must
    /// be nonzero when the self-test runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupted_detected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizeCheck {
    pub trials: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionCheck {
    #[serde(flatten)]
    pub stats: CollisionStats,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridBattery {
    pub instances: usize,
    pub violations: usize,
    /// Largest `trace distance / bound` over instances with a positive bound.
    pub worst_ratio: f64,
    pub grover: QueryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerboundReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub tv: TvSweep,
    pub rounding: RoundingCheck,
    pub realize: RealizeCheck,
    pub collisions: Vec<CollisionCheck>,
    pub hybrid: HybridBattery,
}

fn tv_sweep(cfg: &LowerboundConfig) -> Result<TvSweep> {
    let mut s =
        TvSweep { cases: 0, checked: 0, skipped: 0, violations: 0, closed_form_mismatches: 0, worst_ratio: 0.0 };
    for n in 1..=cfg.tv_max_n {
        let size = 1u64 << n;
        let mut ks = vec![1, size / 2, size - 1];
        ks.retain(|&k| k >= 1);
        ks.dedup();
        for k in ks {
            let f = BooleanHamiltonian::new(n, (0..k as u32).collect())?;
            let ground = classical_gibbs(&f, f64::INFINITY)?;
            for r in 1..=cfg.tv_max_r {
                s.cases += 1;
                let threshold = n as f64 * std::f64::consts::LN_2 + f64::from(r);
                let beta = (threshold + cfg.tv_beta_offset).max(0.0);
                if beta < threshold {
                    s.skipped += 1;
                    continue;
                }
                s.checked += 1;
                let tv = tv_distance(&classical_gibbs(&f, beta)?, &ground)?;
                let closed = tv_to_ground_closed_form(n, k, beta)?;
                if (tv - closed).abs() > 1e-12 {
                    s.closed_form_mismatches += 1;
                }
                let bound = (-f64::from(r)).exp();
                if closed > bound {
                    s.violations += 1;
                }
                s.worst_ratio = s.worst_ratio.max(closed / bound);
            }
        }
    }
    Ok(s)
}

fn random_distribution<R: Rng>(m: usize, rng: &mut R) -> Result<InducedDistribution> {
    let w: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    let drift = 1.0 - p.iter().sum::<f64>();
    p[0] = (p[0] + drift).max(0.0);
    InducedDistribution::new(p)
}

/// Entrywise ceilings with the remainder on the last entry; the negative
/// control for the rounding invariants.
fn corrupted_round_counts(p: &InducedDistribution, k: u64) -> Vec<i64> {
    let m = p.len();
    let mut counts: Vec<i64> = p.probs()[..m - 1].iter().map(|x| (x * k as f64).ceil() as i64).collect();
    let used: i64 = counts.iter().sum();
    counts.push(k as i64 - used);
    counts
}

fn counts_violate(p: &InducedDistribution, counts: &[i64], k: u64) -> bool {
    let kf = k as f64;
    counts.iter().sum::<i64>() != k as i64
        || counts.iter().zip(p.probs()).any(|(&c, &x)| c < 0 || (c as f64 / kf - x).abs() > 1.0 / kf + 1e-12)
}

fn rounding_check<R: Rng>(cfg: &LowerboundConfig, rng: &mut R) -> Result<RoundingCheck> {
    let mut violations = 0;
    let mut detected = 0;
    for _ in 0..cfg.rounding_trials {
        let m = rng.random_range(1..=50);
        let k = rng.random_range(1..=1000u64);
        let p = random_distribution(m, rng)?;
        let counts = round_counts(&p, k)?;
        let signed: Vec<i64> = counts.iter().map(|&c| c as i64).collect();
        let q = InducedDistribution::new(counts.iter().map(|&c| c as f64 / k as f64).collect())?;
        if counts_violate(&p, &signed, k) || round_counts(&q, k)? != counts {
            violations += 1;
        }
        if cfg.self_test && counts_violate(&p, &corrupted_round_counts(&p, k), k) {
            detected += 1;
        }
    }
    Ok(RoundingCheck { trials: cfg.rounding_trials, violations, corrupted_detected: cfg.self_test.then_some(detected) })
}

fn realize_check<R: Rng>(cfg: &LowerboundConfig, rng: &mut R) -> Result<RealizeCheck> {
    let n = 12;
    let mut mismatches = 0;
    for _ in 0..cfg.realize_trials {
        let m = rng.random_range(1..=16);
        let k = rng.random_range(1..=200u64);
        let p = random_distribution(m, rng)?;
        let counts = round_counts(&p, k)?;
        let q = InducedDistribution::new(counts.iter().map(|&c| c as f64 / k as f64).collect())?;
        let part = BinPartition::new(n, m)?;
        let f = realize_subset(&q, &part, k, rng)?;
        if bin_counts(&f, &part)? != counts {
            mismatches += 1;
        }
    }
    Ok(RealizeCheck { trials: cfg.realize_trials, mismatches })
}

fn hybrid_battery<R: Rng>(cfg: &LowerboundConfig, rng: &mut R) -> Result<HybridBattery> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let max_n = cfg.hybrid_max_n.clamp(1, crate::lowerbound::MAX_QUERY_BITS);
    let max_t = cfg.hybrid_max_queries.min(crate::lowerbound::MAX_QUERIES);
    for i in 0..cfg.hybrid_instances {
        let n = rng.random_range(1..=max_n);
        let workspace = rng.random_range(0..=n);
        let queries = rng.random_range(0..=max_t);
        let alg = random_algorithm(n, workspace, queries, rng)?;
        let size = 1usize << n;
        let samples = 16;
        let functions = if i % 2 == 0 {
            let zeros = rng.random_range(1..=size.div_ceil(2));
            planted_zero_functions(n, zeros, samples, rng)?
        } else {
            let q: f64 = rng.random_range(0.0..0.5);
            (0..samples).map(|_| (0..size).map(|_| u8::from(rng.random::<f64>() >= q)).collect()).collect()
        };
        let rep = query_sim_validate(&alg, &functions, &vec![1; size])?;
        if !rep.passed {
            violations += 1;
        }
        if rep.bound > 0.0 {
            worst = worst.max(rep.trace_distance / rep.bound);
        }
    }
    let grover = grover_algorithm(2, 1)?;
    let planted: Vec<Vec<u8>> = (0..4).map(|z| (0..4).map(|b| u8::from(b != z)).collect()).collect();
    let grover = query_sim_validate(&grover, &planted, &[1; 4])?;
    if !grover.passed {
        violations += 1;
    }
    Ok(HybridBattery { instances: cfg.hybrid_instances, violations, worst_ratio: worst, grover })
}

/// Runs the temperature, rounding, realization, collision and hybrid-bound
/// checks. `header.passed` is filled in from the results.
pub fn run_lowerbound_battery(cfg: &LowerboundConfig, seed: u64, mut header: ReportHeader) -> Result<LowerboundReport> {
    let stream = |section: u64| copy_rng(derive_seed(seed, &[section]), 0);
    let tv = tv_sweep(cfg)?;
    let rounding = rounding_check(cfg, &mut stream(1))?;
    let realize = realize_check(cfg, &mut stream(2))?;
    let mut rng = stream(3);
    let collisions = cfg
        .collision_grid
        .iter()
        .map(|&(s, k)| {
            let stats = collision_probability(s, k, cfg.collision_trials, &mut rng)?;
            let passed = stats.empirical <= stats.bound + 3.0 * stats.standard_error;
            Ok(CollisionCheck { stats, passed })
        })
        .collect::<Result<Vec<_>>>()?;
    let hybrid = hybrid_battery(cfg, &mut stream(4))?;
    header.passed = tv.violations == 0
        && tv.closed_form_mismatches == 0
        && rounding.violations == 0
        && rounding.corrupted_detected.is_none_or(|d| d > 0)
        && realize.mismatches == 0
        && collisions.iter().all(|c| c.passed)
        && hybrid.violations == 0;
    Ok(LowerboundReport { header, tv, rounding, realize, collisions, hybrid })
}
