//! Config-driven commands behind the `dbshadow` binary.
//!
//! Every command writes its outputs under `output_dir` with fixed file
//! names; each file carries the config digest and seed, and contains no
//! timing or host information, so identical configs give identical bytes.

mod battery;
mod config;

pub use battery::{run_lowerbound_battery, LowerboundReport};
pub use config::{example_config, LoadedSystem, LowerboundConfig, OperatorSource, Overrides, RunConfig, ScalingConfig};

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{signal_identity_residual, verify_detailed_balance, DetailedBalanceReport};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_all, label_rate_check, plan_sizing, sizing_for_ell, write_estimates_csv, EstimatorReport, LabelRate,
    Sizing,
};
use crate::operator::{build_hamiltonian, HermitianOperator, PauliTerm};
use crate::trajectory::{copy_rng, marginal_check_exact, run_prepared, PreparedSystem, ProtocolPlan, MARGINAL_BUDGET};

/// Environment variable selecting the worker-thread count.
pub const WORKERS_ENV: &str = "DBSHADOW_WORKERS";

/// Outcome of one command: the JSON report and whether every assertion held.
#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub passed: bool,
    pub report: serde_json::Value,
    pub files: Vec<PathBuf>,
}

/// Shared header of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub passed: bool,
}

fn header(cmd: &str, cfg: &RunConfig, passed: bool) -> ReportHeader {
    ReportHeader { command: cmd.to_string(), config_digest: cfg.digest(), seed: cfg.seed, passed }
}

fn preamble(cfg: &RunConfig) -> Vec<String> {
    vec![format!("config_digest={}", cfg.digest()), format!("seed={}", cfg.seed)]
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<serde_json::Value> {
        let v = serde_json::to_value(value)?;
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write(name, text.as_bytes())?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCheck {
    #[serde(flatten)]
    pub balance: DetailedBalanceReport,
    /// `|Tr[rho (E1 - E2)]/(c/2g0) - g0 Tr[rho A]|`.
    pub signal: f64,
    pub conditioning: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub position: usize,
    pub observable: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub tolerance: f64,
    pub marginal_tolerance: f64,
    pub channels: Vec<ChannelCheck>,
    pub marginal: Vec<MarginalCheck>,
}

/// Tolerance for the exact marginal-law residual.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Channel sequence for the marginal-law check: the observables in order,
/// cycled to twice their count but at most as long as the enumeration
/// budget allows.
fn marginal_sequence(m: usize) -> Vec<usize> {
    let mut max_len = 0usize;
    while 3u64.pow(max_len as u32 + 1) <= MARGINAL_BUDGET {
        max_len += 1;
    }
    (0..(2 * m).min(max_len)).map(|i| i % m).collect()
}

pub fn verify_report(cfg: &RunConfig) -> Result<VerifyReport> {
    let sys = cfg.load_system()?;
    let prepared = PreparedSystem::new(&sys.hamiltonian, &sys.observables, &sys.ids, &cfg.channel_params())?;
    let rho = &prepared.rho;
    let mut channels = Vec::new();
    for (ch, a) in prepared.channels.iter().zip(&sys.observables) {
        let balance = verify_detailed_balance(ch, rho, cfg.tolerance)?;
        let signal = signal_identity_residual(ch, a, rho);
        channels.push(ChannelCheck {
            balance,
            signal,
            conditioning: ch.conditioning,
            warning: ch.conditioning_warning(),
        });
    }
    let seq = marginal_sequence(prepared.channels.len());
    let seq_channels: Vec<_> = seq.iter().map(|&i| prepared.channels[i].clone()).collect();
    let marginal = (0..seq.len())
        .map(|pos| {
            Ok(MarginalCheck {
                position: pos,
                observable: sys.ids[seq[pos]].clone(),
                residual: marginal_check_exact(&seq_channels, rho, pos)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = channels.iter().all(|c| c.balance.passed && c.signal <= cfg.tolerance)
        && marginal.iter().all(|m| m.residual <= MARGINAL_TOL);
    Ok(VerifyReport {
        header: header("verify", cfg, passed),
        tolerance: cfg.tolerance,
        marginal_tolerance: MARGINAL_TOL,
        channels,
        marginal,
    })
}

/// Completeness, fixed point, KMS, signal and marginal-law suites.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CommandOutcome> {
    let report = verify_report(cfg)?;
    let mut out = Output::new(&cfg.output_dir)?;
    let value = out.json("report.json", &report)?;
    Ok(CommandOutcome { passed: report.header.passed, report: value, files: out.files })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub sizing: Sizing,
    pub ell: usize,
    pub copies: usize,
    pub rng_fingerprint: String,
    pub estimates: Vec<EstimatorReport>,
    pub label_rates: Vec<LabelRate>,
}

/// Plan for `cfg`, with `ell` and `copies` from the overrides or the sizing
/// rules.
pub fn plan_for(cfg: &RunConfig, ids: &[String]) -> Result<(ProtocolPlan, Sizing)> {
    let m = ids.len();
    let c = cfg.c();
    let sizing = match cfg.ell {
        Some(ell) => sizing_for_ell(cfg.method, cfg.epsilon, cfg.delta, m, c, ell)?,
        None => plan_sizing(cfg.method, cfg.epsilon, cfg.delta, m, c)?,
    };
    let plan = ProtocolPlan {
        observable_ids: ids.to_vec(),
        ell: sizing.ell,
        copies: cfg.copies.unwrap_or(sizing.copies),
        seed: cfg.seed,
        channel_params: cfg.channel_params(),
        engine: cfg.engine,
    };
    Ok((plan, sizing))
}

/// Runs the protocol and the estimators. Exact expectations are attached
/// when `n <= 12` (always, given the operator cap).
pub fn estimate_report(cfg: &RunConfig) -> Result<(EstimateReport, crate::trajectory::Transcript)> {
    let sys = cfg.load_system()?;
    let (plan, sizing) = plan_for(cfg, &sys.ids)?;
    let prepared = PreparedSystem::new(&sys.hamiltonian, &sys.observables, &sys.ids, &plan.channel_params)?;
    let transcript = run_prepared(&plan, &prepared)?;
    let mut estimates = estimate_all(&transcript, cfg.method, cfg.epsilon, cfg.delta)?;
    for (r, a) in estimates.iter_mut().zip(&sys.observables) {
        r.exact = Some(a.expectation(&prepared.rho));
    }
    let label_rates = label_rate_check(&transcript);
    let passed = estimates.iter().all(|r| r.abs_error().is_some_and(|e| e <= cfg.epsilon))
        && label_rates.iter().all(|l| l.passed);
    let report = EstimateReport {
        header: header("estimate", cfg, passed),
        sizing,
        ell: plan.ell,
        copies: plan.copies,
        rng_fingerprint: transcript.rng_fingerprint.clone(),
        estimates,
        label_rates,
    };
    Ok((report, transcript))
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<CommandOutcome> {
    let (report, transcript) = estimate_report(cfg)?;
    let mut out = Output::new(&cfg.output_dir)?;
    let pre = preamble(cfg);
    let mut buf = Vec::new();
    write_estimates_csv(&report.estimates, &mut buf, &pre)?;
    out.write("estimates.csv", &buf)?;
    out.json("estimates.json", &report.estimates)?;
    let mut buf = Vec::new();
    transcript.write_csv(&mut buf, &pre)?;
    out.write("transcript.csv", &buf)?;
    out.json("transcript.json", &transcript.sidecar())?;
    let value = out.json("report.json", &report)?;
    Ok(CommandOutcome { passed: report.header.passed, report: value, files: out.files })
}

/// Derives an independent 64-bit seed from a base seed and indices.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"dbshadow-seed");
    h.update(base.to_le_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// `count` random observables on `n` qubits: Gaussian combinations of all
/// non-identity Pauli words, scaled to unit operator norm.
pub fn random_observables<R: Rng>(n: usize, count: usize, rng: &mut R) -> Result<Vec<(String, HermitianOperator)>> {
    let words: Vec<String> = (1..4usize.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let l = ['I', 'X', 'Y', 'Z'][code % 4];
                    code /= 4;
                    l
                })
                .collect()
        })
        .collect();
    (0..count)
        .map(|i| {
            let terms = words
                .iter()
                .map(|w| PauliTerm::new(StandardNormal.sample(rng), w.as_str()))
                .collect::<Result<Vec<_>>>()?;
            let a = build_hamiltonian(&terms, n)?;
            let scaled = HermitianOperator::from_matrix(a.matrix().scale(1.0 / a.norm()))?;
            Ok((format!("R{i}"), scaled))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: usize,
    pub epsilon: f64,
    pub ell: usize,
    pub copies_used: usize,
    pub worst_error: f64,
    pub success_fraction: f64,
    pub seeds: usize,
    /// `1 - delta - 3 sqrt(delta (1 - delta) / seeds)`.
    pub success_threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub rows: Vec<ScalingRow>,
    /// R² of `copies_used` against `ln M` along the `M` sweep.
    pub log_m_r2: Option<f64>,
    /// `copies_used(eps_i) eps_i^2 / (copies_used(eps_0) eps_0^2)` along the
    /// accuracy sweep.
    pub epsilon_ratio_deviation: Vec<f64>,
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Smallest acceptable R² of `copies_used` against `ln M`.
pub const MIN_LOG_M_R2: f64 = 0.9;
/// Largest acceptable relative deviation from `copies_used ∝ 1/eps²`.
pub const MAX_RATIO_DEVIATION: f64 = 0.25;

/// Rough cost of one channel application per squared dimension, for the
/// refusal message.
const NS_PER_STEP_PER_DIM2: f64 = 4.0;

pub fn scaling_report(cfg: &RunConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    let sc = &cfg.scaling;
    if sc.seeds == 0 {
        return Err(Error::input("scaling needs at least one seed"));
    }
    let sys = cfg.load_system()?;
    let mut points: Vec<(usize, f64)> = sc.m_grid.iter().map(|&m| (m, sc.epsilon_for_m)).collect();
    for &e in &sc.epsilon_grid {
        if !points.contains(&(sc.m_for_epsilon, e)) {
            points.push((sc.m_for_epsilon, e));
        }
    }
    if points.iter().any(|&(m, _)| m == 0) {
        return Err(Error::input("observable counts in the scaling grid must be positive"));
    }
    let c = cfg.c();
    let sizings =
        points.iter().map(|&(m, e)| plan_sizing(cfg.method, e, cfg.delta, m, c)).collect::<Result<Vec<_>>>()?;
    let steps: u64 = sizings.iter().map(|s| (s.copies * s.observables * s.ell) as u64 * sc.seeds as u64).sum();
    if steps > sc.max_steps {
        let dim = sys.hamiltonian.dim() as f64;
        let secs = steps as f64 * NS_PER_STEP_PER_DIM2 * dim * dim * 1e-9;
        return Err(Error::input(format!(
            "scaling grid needs {steps} channel applications (about {secs:.0} s single-threaded), above max_steps = {}",
            sc.max_steps
        )));
    }
    let max_m = points.iter().map(|p| p.0).max().unwrap_or(1);
    let pool = random_observables(cfg.n, max_m, &mut copy_rng(derive_seed(cfg.seed, &[u64::MAX]), 0))?;
    let mut rows = Vec::new();
    for (idx, (&(m, eps), sizing)) in points.iter().zip(&sizings).enumerate() {
        let ids: Vec<String> = pool[..m].iter().map(|p| p.0.clone()).collect();
        let obs: Vec<HermitianOperator> = pool[..m].iter().map(|p| p.1.clone()).collect();
        let prepared = PreparedSystem::new(&sys.hamiltonian, &obs, &ids, &cfg.channel_params())?;
        let exact: Vec<f64> = obs.iter().map(|a| a.expectation(&prepared.rho)).collect();
        let mut worst: f64 = 0.0;
        let mut successes = 0usize;
        for s in 0..sc.seeds {
            let plan = ProtocolPlan {
                observable_ids: ids.clone(),
                ell: sizing.ell,
                copies: sizing.copies,
                seed: derive_seed(cfg.seed, &[idx as u64, s as u64]),
                channel_params: cfg.channel_params(),
                engine: cfg.engine,
            };
            let t = run_prepared(&plan, &prepared)?;
            let est = estimate_all(&t, cfg.method, eps, cfg.delta)?;
            let err = est.iter().zip(&exact).map(|(r, x)| (r.estimate - x).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
            if err <= eps {
                successes += 1;
            }
        }
        let frac = successes as f64 / sc.seeds as f64;
        let threshold = 1.0 - cfg.delta - 3.0 * (cfg.delta * (1.0 - cfg.delta) / sc.seeds as f64).sqrt();
        rows.push(ScalingRow {
            m,
            epsilon: eps,
            ell: sizing.ell,
            copies_used: sizing.copies,
            worst_error: worst,
            success_fraction: frac,
            seeds: sc.seeds,
            success_threshold: threshold,
            passed: frac >= threshold,
        });
    }
    let m_rows: Vec<&ScalingRow> =
        rows.iter().filter(|r| r.epsilon == sc.epsilon_for_m && sc.m_grid.contains(&r.m)).collect();
    let log_m_r2 = (m_rows.len() >= 3).then(|| {
        let x: Vec<f64> = m_rows.iter().map(|r| (r.m as f64).ln()).collect();
        let y: Vec<f64> = m_rows.iter().map(|r| r.copies_used as f64).collect();
        r_squared(&x, &y)
    });
    let e_rows: Vec<&ScalingRow> = sc
        .epsilon_grid
        .iter()
        .filter_map(|&e| rows.iter().find(|r| r.m == sc.m_for_epsilon && r.epsilon == e))
        .collect();
    let epsilon_ratio_deviation = match e_rows.first() {
        Some(base) => {
            let b = base.copies_used as f64 * base.epsilon * base.epsilon;
            e_rows.iter().map(|r| r.copies_used as f64 * r.epsilon * r.epsilon / b - 1.0).collect()
        }
        None => Vec::new(),
    };
    let passed = rows.iter().all(|r| r.passed)
        && log_m_r2.is_none_or(|r2| r2 >= MIN_LOG_M_R2)
        && epsilon_ratio_deviation.iter().all(|d| d.abs() <= MAX_RATIO_DEVIATION);
    Ok(ScalingReport { header: header("scaling", cfg, passed), rows, log_m_r2, epsilon_ratio_deviation })
}

pub fn write_scaling_csv<W: std::io::Write>(rows: &[ScalingRow], mut out: W, preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "epsilon", "ell", "copies_used", "worst_error", "success_fraction", "seeds", "passed"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.epsilon.to_string(),
            r.ell.to_string(),
            r.copies_used.to_string(),
            format!("{:.12e}", r.worst_error),
            r.success_fraction.to_string(),
            r.seeds.to_string(),
            r.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Repeats the protocol over seeds at each grid point and records the
/// all-observable success fraction at the theory-sized copy count.
pub fn cmd_scaling(cfg: &RunConfig) -> Result<CommandOutcome> {
    let report = scaling_report(cfg)?;
    let mut out = Output::new(&cfg.output_dir)?;
    let mut buf = Vec::new();
    write_scaling_csv(&report.rows, &mut buf, &preamble(cfg))?;
    out.write("scaling.csv", &buf)?;
    let value = out.json("report.json", &report)?;
    Ok(CommandOutcome { passed: report.header.passed, report: value, files: out.files })
}

pub fn cmd_lowerbound(cfg: &RunConfig) -> Result<CommandOutcome> {
    cfg.validate()?;
    let report = run_lowerbound_battery(&cfg.lowerbound, cfg.seed, header("lowerbound", cfg, false))?;
    let mut out = Output::new(&cfg.output_dir)?;
    let value = out.json("report.json", &report)?;
    Ok(CommandOutcome { passed: report.header.passed, report: value, files: out.files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_cfg(dir: &Path) -> RunConfig {
        RunConfig { output_dir: dir.to_path_buf(), ..example_config() }
    }

    #[test]
    fn example_config_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_verify(&tmp_cfg(dir.path())).unwrap();
        assert!(out.passed, "{}", out.report);
        assert!(dir.path().join("report.json").exists());
        let rep: VerifyReport = serde_json::from_value(out.report).unwrap();
        assert_eq!(rep.channels.len(), 3);
        assert_eq!(rep.marginal.len(), 6);
        assert!(rep.channels.iter().all(|c| c.balance.worst() <= 1e-8));
    }

    #[test]
    fn bad_c_and_bad_norm_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { c: Some(1.0), sigma: 0.3, ..tmp_cfg(dir.path()) };
        assert!(matches!(cmd_verify(&cfg), Err(Error::Construction(_))));
        let mut cfg = tmp_cfg(dir.path());
        cfg.observables.push(OperatorSource::inline("big", "1.5 ZI"));
        let err = cmd_verify(&cfg).unwrap_err();
        assert!(err.to_string().contains("big"), "{err}");
    }

    #[test]
    fn digest_ignores_output_dir_and_tracks_fields() {
        let a = example_config();
        let b = RunConfig { output_dir: "elsewhere".into(), ..example_config() };
        let c = RunConfig { seed: 1, ..example_config() };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = example_config();
        Overrides { seed: Some(9), c: Some(0.25), seeds: Some(3), ..Default::default() }.apply(&mut cfg);
        assert_eq!((cfg.seed, cfg.c(), cfg.scaling.seeds), (9, 0.25, 3));
        assert_eq!(cfg.beta, 1.0);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = example_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::from_json(&text, Path::new(".")).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_json("{\"bogus\": 1}", Path::new(".")).is_err());
        let partial = RunConfig::from_json("{\"seed\": 5}", Path::new(".")).unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.n, 1);
    }

    #[test]
    fn small_estimate_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mk = |d: &Path| RunConfig { epsilon: 0.3, delta: 0.2, output_dir: d.to_path_buf(), ..example_config() };
        let a = cmd_estimate(&mk(d1.path())).unwrap();
        let b = cmd_estimate(&mk(d2.path())).unwrap();
        for name in ["estimates.csv", "transcript.csv", "report.json", "transcript.json"] {
            let x = std::fs::read(d1.path().join(name)).unwrap();
            let y = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        assert_eq!(a.passed, b.passed);
        let csv = std::fs::read_to_string(d1.path().join("estimates.csv")).unwrap();
        assert!(csv.starts_with("# config_digest="));
    }

    #[test]
    fn identity_observable_estimates_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg =
            RunConfig { observables: vec![OperatorSource::inline("I", "1.0 II")], epsilon: 0.2, ..tmp_cfg(dir.path()) };
        let (rep, t) = estimate_report(&cfg).unwrap();
        assert!((rep.estimates[0].estimate - 1.0).abs() <= 0.2);
        let twos = t.labels().iter().filter(|&&l| l == 2).count();
        let ones = t.labels().iter().filter(|&&l| l == 1).count();
        assert!(ones > twos);
    }

    #[test]
    fn scaling_refuses_oversized_grids() {
        let cfg =
            RunConfig { scaling: ScalingConfig { max_steps: 10, ..ScalingConfig::default() }, ..example_config() };
        let err = scaling_report(&cfg).unwrap_err();
        assert!(err.to_string().contains("channel applications"), "{err}");
    }

    #[test]
    fn r_squared_of_a_line_is_one() {
        assert!((r_squared(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!(r_squared(&[1.0, 2.0, 3.0], &[1.0, -1.0, 1.0]) < 0.1);
    }
}
