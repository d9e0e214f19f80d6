//! Run configuration: a TOML file with `[system]`, `[cone]`, `[solver]`,
//! `[output]` and `[checks]` sections.

use std::path::{Path, PathBuf};

use nsrpf::systems::{CircleMapSpec, MatrixChainSpec};
use serde::Deserialize;

pub const OUTPUT_DIR_ENV: &str = "NSRPF_OUTPUT_DIR";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub cone: ConeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub checks: ChecksConfig,
}

// Parsed once per system kind so that type errors keep their field names and line numbers.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw<S> {
    system: S,
    #[serde(default)]
    cone: ConeConfig,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    checks: ChecksConfig,
}

impl<S> Raw<S> {
    fn into_config(self, wrap: impl FnOnce(S) -> SystemConfig) -> RunConfig {
        RunConfig { system: wrap(self.system), cone: self.cone, solver: self.solver, output: self.output, checks: self.checks }
    }
}

#[derive(Deserialize)]
struct Probe {
    system: Option<KindOnly>,
}

#[derive(Deserialize)]
struct KindOnly {
    kind: Option<String>,
}

#[derive(Debug, Clone)]
pub enum SystemConfig {
    Matrix(MatrixConfig),
    Circle(CircleConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[allow(dead_code)]
    kind: String,
    pub start: i64,
    pub end: i64,
    #[serde(default = "yes")]
    pub two_sided: bool,
    /// One matrix used at every index.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// One matrix per index, `end - start + 1` of them.
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
    pub random: Option<RandomMatrices>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMatrices {
    pub d: usize,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircleFamily {
    Stationary,
    Alternating,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    #[allow(dead_code)]
    kind: String,
    pub grid: usize,
    pub start: i64,
    pub end: i64,
    #[serde(default = "yes")]
    pub two_sided: bool,
    pub family: CircleFamily,
    /// Map perturbation `ε` in `2x + ε sin 2πx`.
    #[serde(default)]
    pub eps: f64,
    /// Potential amplitude: `a` for the stationary family, the envelope for the alternating one.
    #[serde(default)]
    pub a: f64,
    /// Potential phase (stationary family).
    #[serde(default)]
    pub b: f64,
    /// Locality radius; defaults to the family's own.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum QSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    #[serde(default = "auto")]
    pub q: QSetting,
    pub delta: Option<f64>,
    #[serde(default = "one")]
    pub beta: f64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        Self { q: auto(), delta: None, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub k_max: Option<usize>,
    pub tol: Option<f64>,
    /// Indices written to the measure and function CSVs; defaults to everything solved.
    pub window: Option<[i64; 2]>,
    /// Steps kept beyond each reported index; defaults to the bound implied by the measured diameter.
    pub headroom: Option<usize>,
    #[serde(default)]
    pub seeds: SeedConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    /// Reference measures are uniform unless a seed is given.
    pub sigma: Option<u64>,
    #[serde(default = "one_u64")]
    pub sampling: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { sigma: None, sampling: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Eigen,
    Uniqueness,
    Rates,
    Contraction,
    InvariantChain,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Eigen, Check::Uniqueness, Check::Rates, Check::Contraction, Check::InvariantChain];

    pub fn name(self) -> &'static str {
        match self {
            Check::Eigen => "eigen",
            Check::Uniqueness => "uniqueness",
            Check::Rates => "rates",
            Check::Contraction => "contraction",
            Check::InvariantChain => "invariant_chain",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default = "all_checks")]
    pub run: Vec<Check>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub eigen_budget: Option<f64>,
    pub invariant_budget: Option<f64>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { run: all_checks(), samples: default_samples(), trials: default_trials(), eigen_budget: None, invariant_budget: None }
    }
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn auto() -> QSetting {
    QSetting::Keyword("auto".into())
}
fn default_dir() -> PathBuf {
    PathBuf::from("nsrpf-out")
}
fn all_checks() -> Vec<Check> {
    Check::ALL.to_vec()
}
fn default_samples() -> usize {
    1000
}
fn default_trials() -> usize {
    2
}

/// A configuration that could not be read or does not describe a valid run.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// The system the configuration describes.
#[derive(Debug, Clone)]
pub enum SystemSpec {
    Matrix(MatrixChainSpec),
    Circle(CircleMapSpec),
}

impl SystemSpec {
    pub fn window(&self) -> (i64, i64) {
        match self {
            SystemSpec::Matrix(m) => (m.start, m.n_max()),
            SystemSpec::Circle(c) => (c.start, c.start + c.eps.len() as i64 - 1),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let toml_err = |e: toml::de::Error| bad(e.to_string().trim_end().to_string());
        let probe: Probe = toml::from_str(text).map_err(toml_err)?;
        let kind = probe.system.ok_or_else(|| bad("missing [system] section"))?.kind;
        let cfg = match kind.as_deref() {
            Some("matrix") => toml::from_str::<Raw<MatrixConfig>>(text).map_err(toml_err)?.into_config(SystemConfig::Matrix),
            Some("circle") => toml::from_str::<Raw<CircleConfig>>(text).map_err(toml_err)?.into_config(SystemConfig::Circle),
            Some(k) => return Err(bad(format!("system.kind: expected \"matrix\" or \"circle\", got {k:?}"))),
            None => return Err(bad("system.kind: missing; use \"matrix\" or \"circle\"")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.system, SystemConfig::Matrix(_))
    }

    pub fn tol(&self) -> f64 {
        self.solver.tol.unwrap_or(if self.is_matrix() { 1e-10 } else { 1e-6 })
    }

    pub fn eigen_budget(&self) -> f64 {
        self.checks.eigen_budget.unwrap_or(if self.is_matrix() { 1e-10 } else { 1e-6 })
    }

    pub fn invariant_budget(&self) -> f64 {
        self.checks.invariant_budget.unwrap_or(if self.is_matrix() { 1e-10 } else { 1e-5 })
    }

    /// `Some(q)` for a fixed constant, `None` for the automatic rule.
    pub fn fixed_q(&self) -> Option<f64> {
        match self.cone.q {
            QSetting::Value(q) => Some(q),
            QSetting::Keyword(_) => None,
        }
    }

    /// The output directory, with the environment override applied.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let QSetting::Keyword(k) = &self.cone.q {
            if k != "auto" {
                return Err(bad(format!("cone.q: expected a number or \"auto\", got {k:?}")));
            }
        }
        if let Some(tol) = self.solver.tol {
            if !(tol > 0.0) {
                return Err(bad(format!("solver.tol: must be positive, got {tol}")));
            }
        }
        if self.solver.k_max == Some(0) {
            return Err(bad("solver.k_max: must be at least 1"));
        }
        let (lo, hi) = self.spec()?.window();
        let len = (hi - lo + 1) as usize;
        if let Some(k) = self.solver.k_max {
            if k > len {
                return Err(bad(format!("solver.k_max: {k} exceeds the {len} stages of the system window [{lo}, {hi}]")));
            }
        }
        if let Some([a, b]) = self.solver.window {
            if a > b || a < lo || b > hi {
                return Err(bad(format!("solver.window: [{a}, {b}] must be an ordered sub-range of the system window [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Builds the system description, checking the section for consistency.
    pub fn spec(&self) -> Result<SystemSpec, ConfigError> {
        match &self.system {
            SystemConfig::Matrix(m) => {
                if m.end < m.start {
                    return Err(bad(format!("system.end: {} is before system.start {}", m.end, m.start)));
                }
                let given = [m.matrix.is_some(), m.matrices.is_some(), m.random.is_some()].iter().filter(|&&b| b).count();
                if given != 1 {
                    return Err(bad("system: give exactly one of `matrix`, `matrices` or `random`"));
                }
                let mut spec = if let Some(mat) = &m.matrix {
                    MatrixChainSpec::stationary(mat.clone(), m.start, m.end)
                } else if let Some(ms) = &m.matrices {
                    let want = (m.end - m.start + 1) as usize;
                    if ms.len() != want {
                        return Err(bad(format!("system.matrices: {} given, the window needs {want}", ms.len())));
                    }
                    MatrixChainSpec::new(m.start, ms.clone(), m.two_sided)
                } else {
                    let r = m.random.as_ref().unwrap();
                    MatrixChainSpec::random(r.d, m.start, m.end, r.lo, r.hi, r.seed)
                }
                .map_err(|e| bad(format!("system: {e}")))?;
                spec.two_sided = m.two_sided;
                Ok(SystemSpec::Matrix(spec))
            }
            SystemConfig::Circle(c) => {
                if c.end < c.start {
                    return Err(bad(format!("system.end: {} is before system.start {}", c.end, c.start)));
                }
                let mut spec = match c.family {
                    CircleFamily::Stationary => CircleMapSpec::stationary(c.grid, c.eps, c.a, c.b, c.start, c.end),
                    CircleFamily::Alternating => CircleMapSpec::alternating(c.grid, c.eps, c.a, c.start, c.end),
                };
                spec.two_sided = c.two_sided;
                if let Some(d) = c.delta {
                    spec.delta = d;
                }
                spec.validate().map_err(|e| bad(format!("system: {e}")))?;
                Ok(SystemSpec::Circle(spec))
            }
        }
    }
}
