//! Experiment configuration: a TOML file with sections `[model]`,
//! `[chains.A]`, `[chains.Ea]`, `[chains.P]`, `[policy]`, `[solver]` and
//! `[simulate]`. Unknown keys are errors. See `docs/config.md`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use evsched::mdp::read_policy;
use evsched::{
    ConservativePolicy, ExogenousChains, IidSpec, MarkovChain, MdpModel, ModelParams, Policy, RadicalPolicy, ServeNone,
    SimConfig, TablePolicy, DEFAULT_SCHEDULE,
};

/// Keys that rescale a chain instead of setting a field.
pub const DERIVED_KEYS: [&str; 2] = ["arrival_mean", "renewable_mean"];

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    /// One entry per failing field.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(m) => write!(f, "cannot parse config: {m}"),
            ConfigError::Invalid(fields) => {
                writeln!(f, "invalid config:")?;
                for m in fields {
                    writeln!(f, "  {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn inf() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub charge_points: u64,
    #[serde(default = "ModelSection::block_energy")]
    pub block_energy: u64,
    #[serde(default = "ModelSection::tau")]
    pub tau: f64,
    /// `inf` for an unbounded battery.
    pub e_max: f64,
    #[serde(default = "ModelSection::q_max")]
    pub q_max: u64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "ModelSection::alpha")]
    pub alpha: f64,
    #[serde(default = "inf")]
    pub cost_bound: f64,
    #[serde(default = "ModelSection::max_blocks")]
    pub max_blocks: u32,
    #[serde(default = "ModelSection::energy_filter")]
    pub energy_filter: bool,
    #[serde(default)]
    pub initial_queue: u64,
    #[serde(default)]
    pub initial_battery: u64,
}

impl ModelSection {
    fn block_energy() -> u64 {
        10
    }
    fn tau() -> f64 {
        1.0
    }
    fn q_max() -> u64 {
        1_000
    }
    fn alpha() -> f64 {
        0.99
    }
    fn max_blocks() -> u32 {
        1
    }
    fn energy_filter() -> bool {
        true
    }
}

/// A chain given either by i.i.d. probabilities or a transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub values: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub initial: usize,
}

impl ChainSpec {
    pub fn build(&self) -> evsched::Result<MarkovChain<f64>> {
        let chain = match (&self.probs, &self.transition) {
            (Some(p), None) => MarkovChain::from_iid(&IidSpec::new(self.values.clone(), p.clone())?)?,
            (None, Some(t)) => MarkovChain::new(self.values.clone(), t.clone(), 0)?,
            _ => return Err(evsched::Error::Config("give exactly one of `probs` and `transition`".into())),
        };
        chain.with_initial(self.initial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsSection {
    #[serde(rename = "A")]
    pub arrivals: ChainSpec,
    #[serde(rename = "Ea")]
    pub renewables: ChainSpec,
    #[serde(rename = "P")]
    pub prices: ChainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// `radical`, `conservative`, `serve-none` or `table:<path>`.
    pub name: String,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { name: "radical".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Discounted,
    Constrained,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Exact,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub mode: SolveMode,
    pub tolerance: f64,
    pub max_iters: usize,
    pub schedule: Vec<f64>,
    pub beta_init: f64,
    pub beta_rel_tol: f64,
    pub max_steps: usize,
    pub evaluator: EvaluatorKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            mode: SolveMode::Discounted,
            tolerance: evsched::mdp::DEFAULT_TOLERANCE,
            max_iters: 1_000_000,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            beta_init: 1.0,
            beta_rel_tol: 1e-3,
            max_steps: 100,
            evaluator: EvaluatorKind::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub horizon: u64,
    pub seed: u64,
    pub replications: u64,
    pub warmup: bool,
    pub trace: bool,
    /// Override key varied across sweep points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_key: Option<String>,
    pub sweep_values: Vec<f64>,
    /// Each curve is a comma-separated list of `key=value` overrides; the
    /// sweep is repeated per curve.
    pub curves: Vec<String>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            seed: 1,
            replications: 1,
            warmup: false,
            trace: false,
            sweep_key: None,
            sweep_values: Vec::new(),
            curves: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub chains: ChainsSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

/// Parsed config text plus the overrides applied on top of it, so sweep
/// points can be re-derived from the same source.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    table: toml::Table,
    overrides: Vec<String>,
    base_dir: PathBuf,
}

fn split_override(s: &str) -> Result<(&str, &str), ConfigError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| ConfigError::Parse(format!("override `{s}` is not key=value")))
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Parse(format!("`{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn rescale(spec: &mut ChainSpec, target: f64, key: &str) -> Result<(), String> {
    let chain = spec.build().map_err(|e| format!("{key}: {e}"))?;
    let mean = chain.stationary_mean().map_err(|e| format!("{key}: {e}"))?;
    if !(mean > 0.0) {
        return Err(format!("{key}: chain has zero mean and cannot be rescaled"));
    }
    if !(target >= 0.0) {
        return Err(format!("{key}: must be non-negative"));
    }
    spec.values = chain.scaled_values(target / mean).values().to_vec();
    Ok(())
}

impl ConfigSource {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let mut src = Self::from_str(&text)?;
        src.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(src)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let table = text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(Self { table, overrides: Vec::new(), base_dir: PathBuf::new() })
    }

    /// Adds `key=value` overrides; later ones win.
    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Self {
        self.overrides.extend(overrides.iter().map(|s| s.as_ref().to_string()));
        self
    }

    /// Copy with `extra` overrides applied before the existing ones, so
    /// user overrides keep precedence.
    pub fn point<S: AsRef<str>>(&self, extra: &[S]) -> Self {
        let mut out = self.clone();
        out.overrides = extra.iter().map(|s| s.as_ref().to_string()).chain(self.overrides.iter().cloned()).collect();
        out
    }

    /// Directory against which relative `table:` paths resolve.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolves and validates the config.
    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let mut table = self.table.clone();
        let mut derived = Vec::new();
        for o in &self.overrides {
            let (k, v) = split_override(o)?;
            if DERIVED_KEYS.contains(&k) {
                derived.push((k.to_string(), v.to_string()));
            } else {
                set_path(&mut table, k, parse_value(v))?;
            }
        }
        let mut cfg: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut problems = Vec::new();
        for (k, v) in derived {
            let target: f64 = match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    problems.push(format!("{k}: `{v}` is not a number"));
                    continue;
                }
            };
            let spec = if k == "arrival_mean" { &mut cfg.chains.arrivals } else { &mut cfg.chains.renewables };
            if let Err(m) = rescale(spec, target, &k) {
                problems.push(m);
            }
        }
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

/// Renders a sweep value as an override value (integers without a
/// fractional part).
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl Config {
    /// Every failing field, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: &str| out.push(format!("{field}: {msg}"));
        let m = &self.model;
        if m.charge_points == 0 {
            bad("model.charge_points", "must be positive");
        }
        if m.block_energy == 0 {
            bad("model.block_energy", "must be positive");
        }
        if !(m.tau > 0.0 && m.tau.is_finite()) {
            bad("model.tau", "must be positive and finite");
        }
        if !(m.e_max >= 0.0) || (m.e_max.is_finite() && m.e_max.fract() != 0.0) {
            bad("model.e_max", "must be a non-negative integer or inf");
        }
        if !(m.beta >= 0.0 && m.beta.is_finite()) {
            bad("model.beta", "must be non-negative and finite");
        }
        if !(m.alpha >= 0.0 && m.alpha < 1.0) {
            bad("model.alpha", "must lie in [0, 1)");
        }
        if !(m.cost_bound > 0.0) {
            bad("model.cost_bound", "must be positive (inf for none)");
        }
        if m.max_blocks == 0 {
            bad("model.max_blocks", "must be at least 1");
        }
        if m.e_max.is_finite() && m.initial_battery as f64 > m.e_max {
            bad("model.initial_battery", "exceeds e_max");
        }
        for (name, spec) in [("chains.A", &self.chains.arrivals), ("chains.Ea", &self.chains.renewables), ("chains.P", &self.chains.prices)] {
            if let Err(e) = spec.build() {
                bad(name, &e.to_string());
            }
        }
        let p = &self.policy.name;
        if !matches!(p.as_str(), "radical" | "conservative" | "serve-none") && !p.starts_with("table:") {
            bad("policy.name", "expected radical, conservative, serve-none or table:<path>");
        }
        let s = &self.solver;
        if !(s.tolerance > 0.0) {
            bad("solver.tolerance", "must be positive");
        }
        if s.max_iters == 0 {
            bad("solver.max_iters", "must be positive");
        }
        if s.schedule.is_empty() || s.schedule.iter().any(|&a| !(a > 0.0 && a < 1.0)) || s.schedule.windows(2).any(|w| w[0] >= w[1]) {
            bad("solver.schedule", "must be increasing in (0, 1)");
        }
        if !(s.beta_init > 0.0) {
            bad("solver.beta_init", "must be positive");
        }
        if !(s.beta_rel_tol > 0.0) {
            bad("solver.beta_rel_tol", "must be positive");
        }
        let sim = &self.simulate;
        if sim.horizon == 0 {
            bad("simulate.horizon", "must be at least 1");
        }
        if sim.replications == 0 {
            bad("simulate.replications", "must be at least 1");
        }
        if sim.sweep_key.is_some() && sim.sweep_values.is_empty() {
            bad("simulate.sweep_values", "sweep_key given without values");
        }
        if sim.sweep_key.is_none() && !sim.sweep_values.is_empty() {
            bad("simulate.sweep_key", "sweep_values given without a key");
        }
        for c in &sim.curves {
            if c.split(',').any(|o| split_override(o).is_err()) {
                bad("simulate.curves", &format!("`{c}` is not a list of key=value"));
            }
        }
        out
    }

    pub fn params(&self) -> ModelParams<f64> {
        let m = &self.model;
        ModelParams {
            charge_points: m.charge_points,
            block_energy: m.block_energy,
            tau: m.tau,
            e_max: m.e_max.is_finite().then_some(m.e_max as u64),
            q_max: m.q_max,
            beta: m.beta,
            alpha: m.alpha,
            cost_bound: m.cost_bound,
            max_blocks: m.max_blocks,
            energy_filter: m.energy_filter,
        }
    }

    pub fn chains(&self) -> evsched::Result<ExogenousChains<f64>> {
        Ok(ExogenousChains::new(self.chains.arrivals.build()?, self.chains.renewables.build()?, self.chains.prices.build()?))
    }

    pub fn sim_config(&self) -> evsched::Result<SimConfig<f64>> {
        let mut cfg = SimConfig::new(self.params(), self.chains()?);
        cfg.initial_queue = self.model.initial_queue;
        cfg.initial_battery = self.model.initial_battery;
        cfg.warmup = self.simulate.warmup;
        cfg.keep_trace = self.simulate.trace;
        Ok(cfg)
    }

    /// The finite MDP (requires a finite battery and single-block EVs).
    pub fn model(&self) -> evsched::Result<MdpModel<f64>> {
        MdpModel::new(self.params(), self.chains()?)
    }

    /// Policy selected in `[policy]`; `table:` paths resolve against `base`.
    pub fn policy(&self, base: &Path) -> evsched::Result<Box<dyn Policy<f64>>> {
        Ok(match self.policy.name.as_str() {
            "radical" => Box::new(RadicalPolicy),
            "conservative" => Box::new(ConservativePolicy { cost_bound: self.model.cost_bound }),
            "serve-none" => Box::new(ServeNone),
            other => {
                let path = base.join(other.strip_prefix("table:").unwrap_or(other));
                let table = read_policy(&path, self.model()?.dims())?;
                Box::new(TablePolicy::new(table, other))
            }
        })
    }

    /// Short hash of the resolved config.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
