//! TOML experiment configuration.
//!
//! ```toml
//! experiment = "solve"
//! seed = 0
//!
//! [problem]
//! basis = "torus"
//! dim = 1
//! rho = 2
//! a = 1.618033988749895
//! epsilon = 1e-3
//!
//! [[problem.nonlinearity]]
//! degree = 2
//! constant = 1.0
//!
//! [[problem.nonlinearity]]
//! degree = 0
//! modes = [{ j = [1], re = 0.5 }, { j = [-1], re = 0.5 }]
//!
//! [params]
//! N0 = 2
//! N_cap = 64
//! ```
//!
//! Every table rejects unknown keys.

use std::fmt;
use std::path::PathBuf;

use nmcore::lattice::{BasisDescriptor, EigenIndex, SpectralField, WeightMode};
use nmcore::nash_moser::IterationParams;
use nmcore::nonlinearity::NonlinearitySpec;
use nmcore::problem::ProblemSpec;
use nmcore::small_divisors::MeasureScanConfig;
use nmcore::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Solve,
    MeasureScan,
    Uniqueness,
    SolverBench,
    OrderStudy,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::MeasureScan => "measure_scan",
            Experiment::Uniqueness => "uniqueness",
            Experiment::SolverBench => "solver_bench",
            Experiment::OrderStudy => "order_study",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisName {
    Torus,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    Exp,
    Poly,
}

impl From<WeightName> for WeightMode {
    fn from(w: WeightName) -> Self {
        match w {
            WeightName::Exp => WeightMode::Exponential,
            WeightName::Poly => WeightMode::Polynomial,
        }
    }
}

/// One coefficient of a monomial: a torus multi-index `j` or a sphere pair `(l, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub j: Option<Vec<i32>>,
    pub l: Option<u32>,
    pub m: Option<i32>,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// `c_q(x) u^q` with `c_q = constant + sum of modes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub degree: u32,
    pub constant: Option<f64>,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub basis: BasisName,
    /// Torus dimension.
    pub dim: Option<usize>,
    #[serde(default = "default_weight")]
    pub weight_mode: WeightName,
    pub rho: u32,
    pub a: Option<f64>,
    /// `[a_min, a_max]` for measure scans.
    pub a_interval: Option<[f64; 2]>,
    pub epsilon: Option<f64>,
    /// With `p` set, `epsilon` defaults to `delta^(p - 1)`.
    pub delta: Option<f64>,
    #[serde(default)]
    pub nonlinearity: Vec<TermConfig>,
}

fn default_weight() -> WeightName {
    WeightName::Exp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(rename = "N")]
    pub cutoff: f64,
    pub grid_count: usize,
    pub gammas: Vec<f64>,
    /// Defaults to `params.tau`.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    pub perturbations: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub instances: usize,
    #[serde(rename = "N")]
    pub cutoffs: Vec<f64>,
    pub eps_max: f64,
    /// Fraction of instances with a divisor tuned below the threshold.
    #[serde(default = "half")]
    pub resonant_fraction: f64,
    /// Also solve densely and report the relative difference.
    #[serde(default = "yes")]
    pub compare_dense: bool,
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderStudyConfig {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Fill the `seconds` column of `history.csv` (breaks byte-for-byte reproducibility).
    #[serde(default)]
    pub timing_in_history: bool,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub params: IterationParams,
    pub scan: Option<ScanConfig>,
    pub uniqueness: Option<UniquenessConfig>,
    pub bench: Option<BenchConfig>,
    pub order_study: Option<OrderStudyConfig>,
}

/// A configuration problem, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "key `{k}` (line {l}): {}", self.message),
            (Some(k), None) => write!(f, "key `{k}`: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Finds the line of `key` inside `[section]` (or at top level for `""`).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

fn toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let key = e
        .message()
        .split('`')
        .nth(1)
        .filter(|_| e.message().starts_with("unknown field") || e.message().starts_with("missing field"))
        .map(str::to_string);
    ConfigError {
        key,
        line,
        message: e.message().to_string(),
    }
}

/// Parses and checks a configuration.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    cfg.check(text)?;
    Ok(cfg)
}

/// Problem, parameters and experiment inputs with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: ProblemSpec,
    pub params: IterationParams,
    /// `Some(consistent)` when both `delta` and `p` are known.
    pub delta_consistent: Option<bool>,
    pub scan: Option<MeasureScanConfig>,
}

fn err(text: &str, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
    ConfigError {
        line: locate(text, section, key),
        key: Some(full),
        message: message.into(),
    }
}

impl ExperimentConfig {
    fn check(&self, text: &str) -> Result<(), ConfigError> {
        let need = |present: bool, section: &str| {
            if present {
                Ok(())
            } else {
                Err(ConfigError {
                    key: Some(section.to_string()),
                    line: None,
                    message: format!("experiment `{}` requires a [{section}] table", self.experiment.as_str()),
                })
            }
        };
        match self.experiment {
            Experiment::MeasureScan => need(self.scan.is_some(), "scan")?,
            Experiment::Uniqueness => need(self.uniqueness.is_some(), "uniqueness")?,
            Experiment::SolverBench => need(self.bench.is_some(), "bench")?,
            Experiment::OrderStudy => need(self.order_study.is_some(), "order_study")?,
            Experiment::Solve => {}
        }
        self.resolve_with(text).map(|_| ())
    }

    pub fn basis(&self) -> Result<BasisDescriptor, String> {
        let b = match self.problem.basis {
            BasisName::Torus => {
                BasisDescriptor::torus(self.problem.dim.ok_or("torus basis needs `dim`")?).map_err(|e| e.to_string())?
            }
            BasisName::Sphere => {
                if self.problem.dim.is_some() {
                    return Err("`dim` is only meaningful for the torus".into());
                }
                BasisDescriptor::sphere()
            }
        };
        Ok(b.with_weight_mode(self.problem.weight_mode.into()))
    }

    /// Resolves defaults and builds the problem.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        self.resolve_with("")
    }

    fn resolve_with(&self, text: &str) -> Result<Resolved, ConfigError> {
        let pc = &self.problem;
        let basis = self.basis().map_err(|m| err(text, "problem", "basis", m))?;
        let nonlinearity = build_nonlinearity(basis, &pc.nonlinearity).map_err(|m| err(text, "problem", "nonlinearity", m))?;
        let p = self.params.p.or(nonlinearity.leading_degree());
        let epsilon = match (pc.epsilon, pc.delta, p) {
            (Some(e), _, _) => e,
            (None, Some(d), Some(p)) if p >= 2 => d.powi(p as i32 - 1),
            _ => return Err(err(text, "problem", "epsilon", "missing; give `epsilon`, or `delta` with a degree p >= 2")),
        };
        let delta_consistent = match (pc.delta, p) {
            (Some(d), Some(p)) if p >= 2 => Some((epsilon - d.powi(p as i32 - 1)).abs() <= 1e-12 * epsilon.abs().max(f64::MIN_POSITIVE)),
            _ => None,
        };
        let a = match (self.experiment, pc.a, pc.a_interval) {
            (_, Some(a), _) => a,
            (Experiment::MeasureScan, None, Some([lo, hi])) => 0.5 * (lo + hi),
            _ => return Err(err(text, "problem", "a", "missing")),
        };
        let problem = ProblemSpec::new(basis, pc.rho, a, epsilon, nonlinearity).map_err(|e| err(text, "problem", "rho", e.to_string()))?;
        self.params
            .validate_for(&problem)
            .map_err(|e| {
                let msg = e.to_string();
                let key = params_key(&msg);
                err(text, "params", key, msg)
            })?;
        let scan = match &self.scan {
            Some(s) if self.experiment == Experiment::MeasureScan => {
                let [a_min, a_max] = pc.a_interval.ok_or_else(|| err(text, "problem", "a_interval", "measure_scan needs `a_interval`"))?;
                if !(a_max > a_min) {
                    return Err(err(text, "problem", "a_interval", format!("a_min < a_max violated ({a_min}, {a_max})")));
                }
                if s.grid_count < 100 {
                    return Err(err(text, "scan", "grid_count", format!("grid_count >= 100 violated ({})", s.grid_count)));
                }
                if s.gammas.is_empty() || s.gammas.iter().any(|g| !(*g > 0.0)) {
                    return Err(err(text, "scan", "gammas", "gammas must be a non-empty list of positive numbers"));
                }
                Some(MeasureScanConfig {
                    basis,
                    a_min,
                    a_max,
                    grid_count: s.grid_count,
                    epsilon,
                    rho: pc.rho,
                    cutoff: s.cutoff,
                    gammas: s.gammas.clone(),
                    tau: s.tau.unwrap_or(self.params.tau),
                    seed: self.seed,
                })
            }
            _ => None,
        };
        if let Some(u) = &self.uniqueness {
            if !(u.magnitude >= 0.0) {
                return Err(err(text, "uniqueness", "magnitude", "magnitude >= 0 violated"));
            }
        }
        if let Some(b) = &self.bench {
            if b.cutoffs.is_empty() || b.cutoffs.iter().any(|n| !(*n >= 1.0)) {
                return Err(err(text, "bench", "N", "N must be a non-empty list of cutoffs >= 1"));
            }
            if !(b.eps_max > 0.0) {
                return Err(err(text, "bench", "eps_max", "eps_max > 0 violated"));
            }
            if !(0.0..=1.0).contains(&b.resonant_fraction) {
                return Err(err(text, "bench", "resonant_fraction", "0 <= resonant_fraction <= 1 violated"));
            }
        }
        if let Some(o) = &self.order_study {
            if o.epsilons.is_empty() || o.epsilons.iter().any(|e| !(*e >= 0.0)) {
                return Err(err(text, "order_study", "epsilons", "epsilons must be a non-empty list of non-negative numbers"));
            }
        }
        Ok(Resolved {
            problem,
            params: self.params.clone(),
            delta_consistent,
            scan,
        })
    }
}

/// Parameter named first in a validation message such as `"sigma_bar < sigma violated"`.
fn params_key(msg: &str) -> &'static str {
    const KEYS: [&str; 12] = [
        "sigma_bar", "N_cap", "N0", "stop_tol", "threshold", "linear_tol", "gamma1", "gamma", "tau", "kappa", "p", "sigma",
    ];
    let body = msg.strip_prefix("invalid parameters: ").unwrap_or(msg);
    let first = body.split(|c: char| !(c.is_alphanumeric() || c == '_')).find(|w| !w.is_empty()).unwrap_or("");
    KEYS.iter().find(|k| **k == first).copied().unwrap_or("params")
}

fn build_nonlinearity(basis: BasisDescriptor, terms: &[TermConfig]) -> Result<NonlinearitySpec, String> {
    let mut out = Vec::new();
    for (n, t) in terms.iter().enumerate() {
        let mut c = SpectralField::zero(basis, false);
        if let Some(k) = t.constant {
            c = c.add(&constant_field(basis, k));
        }
        for m in &t.modes {
            let (idx, slot) = mode_label(basis, m).map_err(|e| format!("term {n}: {e}"))?;
            let mut block = c.get(&idx).map(<[Complex64]>::to_vec).unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); idx.block_dim()]);
            block[slot] += Complex64::new(m.re, m.im);
            c.insert(idx, block).map_err(|e| e.to_string())?;
        }
        let scale = c.max_abs().max(f64::MIN_POSITIVE);
        let real = c.conjugation_defect() <= 1e-14 * scale;
        c.set_declared_real(real);
        out.push((t.degree as f64, c));
    }
    NonlinearitySpec::new(basis, out).map_err(|e| e.to_string())
}

fn constant_field(basis: BasisDescriptor, k: f64) -> SpectralField {
    match basis.torus_dim() {
        Some(d) => SpectralField::torus_modes(basis, &[(&vec![0; d], Complex64::new(k, 0.0))], true),
        // Y_0^0 = 1 / sqrt(4 pi)
        None => SpectralField::from_blocks(
            basis,
            [(EigenIndex::sphere(0), vec![Complex64::new(k * (4.0 * std::f64::consts::PI).sqrt(), 0.0)])],
            true,
        ),
    }
    .expect("constant block is well formed")
}

fn mode_label(basis: BasisDescriptor, m: &ModeConfig) -> Result<(EigenIndex, usize), String> {
    match (basis.torus_dim(), &m.j, m.l, m.m) {
        (Some(d), Some(j), None, None) => {
            if j.len() != d {
                return Err(format!("mode {j:?} has {} components, torus has dimension {d}", j.len()));
            }
            Ok((EigenIndex::torus(j), 0))
        }
        (None, None, Some(l), Some(mm)) => {
            if mm.unsigned_abs() > l {
                return Err(format!("|m| <= l violated (l = {l}, m = {mm})"));
            }
            Ok((EigenIndex::sphere(l), (mm + l as i32) as usize))
        }
        (Some(_), _, _, _) => Err("torus modes are given as `j = [..]`".into()),
        (None, _, _, _) => Err("sphere modes are given as `l` and `m`".into()),
    }
}
