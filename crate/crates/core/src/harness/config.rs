use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{default_c, ChannelParams, NORM_SLACK};
use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::operator::{build_hamiltonian, parse_pauli_terms, read_pauli_file, HermitianOperator, MAX_QUBITS};
use crate::trajectory::Engine;

/// A Pauli sum given inline (`terms`, one `<coefficient> <word>` per line)
/// or as a file path relative to the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<String>,
}

impl OperatorSource {
    pub fn inline(id: &str, terms: &str) -> Self {
        Self { id: Some(id.to_string()), file: None, terms: Some(terms.to_string()) }
    }

    fn label(&self, fallback: &str) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        if let Some(f) = &self.file {
            return f.display().to_string();
        }
        fallback.to_string()
    }

    fn load(&self, n: usize, base: &Path, fallback: &str) -> Result<(String, HermitianOperator)> {
        let label = self.label(fallback);
        let terms = match (&self.file, &self.terms) {
            (Some(f), None) => read_pauli_file(&base.join(f))?,
            (None, Some(t)) => parse_pauli_terms(t, &label)?,
            _ => return Err(Error::input(format!("operator '{label}' needs exactly one of `file` or `terms`"))),
        };
        let op = build_hamiltonian(&terms, n).map_err(|e| e.context(format!("operator '{label}'")))?;
        Ok((label, op))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub m_grid: Vec<usize>,
    /// Accuracy used along the `m_grid` sweep.
    pub epsilon_for_m: f64,
    pub epsilon_grid: Vec<f64>,
    /// Observable count used along the `epsilon_grid` sweep.
    pub m_for_epsilon: usize,
    pub seeds: usize,
    /// Refuse to run above this many channel applications.
    pub max_steps: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            m_grid: vec![2, 4, 8, 16, 32],
            epsilon_for_m: 0.2,
            epsilon_grid: vec![0.2, 0.1, 0.05],
            m_for_epsilon: 2,
            seeds: 100,
            max_steps: 6_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerboundConfig {
    pub tv_max_n: usize,
    pub tv_max_r: u32,
    /// Added to `n ln 2 + r`; negative values leave the lemma's hypothesis
    /// unmet and those cases are reported as skipped.
    pub tv_beta_offset: f64,
    pub rounding_trials: usize,
    pub realize_trials: usize,
    /// `(S, K)` pairs for the birthday check.
    pub collision_grid: Vec<(u64, u64)>,
    pub collision_trials: usize,
    pub hybrid_instances: usize,
    pub hybrid_max_n: usize,
    pub hybrid_max_queries: usize,
    /// Also run the negative control with entrywise-ceiling rounding, which
    /// must be caught.
    pub self_test: bool,
}

impl Default for LowerboundConfig {
    fn default() -> Self {
        Self {
            tv_max_n: 12,
            tv_max_r: 10,
            tv_beta_offset: 0.0,
            rounding_trials: 10_000,
            realize_trials: 1_000,
            collision_grid: vec![(1, 10), (2, 2), (5, 50), (10, 1_000), (10, 1_000_000), (30, 1_000), (40, 400)],
            collision_trials: 10_000,
            hybrid_instances: 100,
            hybrid_max_n: 4,
            hybrid_max_queries: 5,
            self_test: true,
        }
    }
}

/// Everything one command needs. Unset `ell`/`copies` are derived from
/// `(epsilon, delta, M, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub hamiltonian: OperatorSource,
    pub observables: Vec<OperatorSource>,
    pub beta: f64,
    pub sigma: f64,
    /// Defaults to `min(0.5, 2 g(0))`.
    pub c: Option<f64>,
    pub group_tol: Option<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub ell: Option<usize>,
    pub copies: Option<usize>,
    pub seed: u64,
    pub method: Method,
    pub engine: Engine,
    pub tolerance: f64,
    /// Not part of the digest.
    pub output_dir: PathBuf,
    pub scaling: ScalingConfig,
    pub lowerbound: LowerboundConfig,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 1,
            hamiltonian: OperatorSource::inline("H", "1.0 Z"),
            observables: vec![OperatorSource::inline("Z", "1.0 Z")],
            beta: 1.0,
            sigma: 1.0,
            c: None,
            group_tol: None,
            epsilon: 0.1,
            delta: 0.1,
            ell: None,
            copies: None,
            seed: 0,
            method: Method::default(),
            engine: Engine::default(),
            tolerance: 1e-8,
            output_dir: PathBuf::from("out"),
            scaling: ScalingConfig::default(),
            lowerbound: LowerboundConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Operators loaded from a config.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub hamiltonian: HermitianOperator,
    pub ids: Vec<String>,
    pub observables: Vec<HermitianOperator>,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| match e {
            Error::Json(j) => {
                Error::Parse { source_name: path.display().to_string(), line: j.line(), msg: j.to_string() }
            }
            other => other,
        })
    }

    pub fn c(&self) -> f64 {
        self.c.unwrap_or_else(|| default_c(self.sigma))
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams { beta: self.beta, sigma: self.sigma, c: self.c(), group_tol: self.group_tol }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_QUBITS {
            return Err(Error::input(format!("n must lie in 1..={MAX_QUBITS}, got {}", self.n)));
        }
        if self.observables.is_empty() {
            return Err(Error::input("config lists no observables"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::input(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::input(format!("sigma must be positive, got {}", self.sigma)));
        }
        let c = self.c();
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::input(format!("c must lie in (0, 1], got {c}")));
        }
        for (name, x) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::input(format!("{name} must lie in (0, 1), got {x}")));
            }
        }
        if self.ell == Some(0) || self.copies == Some(0) {
            return Err(Error::input("ell and copies overrides must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::input("tolerance must be positive"));
        }
        Ok(())
    }

    /// Loads `H` and the observables, rejecting any observable with norm
    /// above one.
    pub fn load_system(&self) -> Result<LoadedSystem> {
        self.validate()?;
        let (_, hamiltonian) = self.hamiltonian.load(self.n, &self.base_dir, "hamiltonian")?;
        let mut ids = Vec::with_capacity(self.observables.len());
        let mut observables = Vec::with_capacity(self.observables.len());
        for (i, src) in self.observables.iter().enumerate() {
            let (id, op) = src.load(self.n, &self.base_dir, &format!("observable-{i}"))?;
            let norm = op.norm();
            if norm > 1.0 + NORM_SLACK {
                return Err(Error::input(format!("observable '{id}' has norm {norm:.6} > 1")));
            }
            if ids.contains(&id) {
                return Err(Error::input(format!("observable id '{id}' used twice")));
            }
            ids.push(id);
            observables.push(op);
        }
        Ok(LoadedSystem { hamiltonian, ids, observables })
    }

    /// SHA-256 over the canonical JSON form, excluding `output_dir`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        let mut h = Sha256::new();
        h.update(v.to_string().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub ell: Option<usize>,
    pub copies: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub engine: Option<Engine>,
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            };
        }
        set!(beta);
        set!(sigma);
        set!(epsilon);
        set!(delta);
        set!(seed);
        set!(method);
        set!(engine);
        set!(output_dir);
        if self.c.is_some() {
            cfg.c = self.c;
        }
        if self.ell.is_some() {
            cfg.ell = self.ell;
        }
        if self.copies.is_some() {
            cfg.copies = self.copies;
        }
        if let Some(s) = self.seeds {
            cfg.scaling.seeds = s;
        }
    }
}

/// The shipped example: two-qubit transverse-field Ising chain with three
/// Pauli observables.
pub fn example_config() -> RunConfig {
    RunConfig {
        n: 2,
        hamiltonian: OperatorSource::inline("tfim", "-1.0 ZZ\n-0.8 XI\n-0.8 IX"),
        observables: vec![
            OperatorSource::inline("ZZ", "1.0 ZZ"),
            OperatorSource::inline("XI", "1.0 XI"),
            OperatorSource::inline("YY", "1.0 YY"),
        ],
        beta: 1.0,
        seed: 2024,
        ..RunConfig::default()
    }
}
