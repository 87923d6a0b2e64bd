//! Experiment configuration files.
//!
//! Configs are JSON documents. Parse errors and semantic validation errors
//! both carry the `path:line:column` of the offending entry.

use std::fmt;
use std::path::{Path, PathBuf};

use hsicsa::calibration::CalibrationOptions;
use hsicsa::models::cholera::PARAM_NAMES;
use hsicsa::models::IntegratorOptions;
use hsicsa::sampling::ReductionMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [(&str, &str); 4] = [
    ("ishigami", include_str!("../presets/ishigami.json")),
    ("portfolio", include_str!("../presets/portfolio.json")),
    ("cholera_correlated", include_str!("../presets/cholera_correlated.json")),
    ("cholera_uniform", include_str!("../presets/cholera_uniform.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelSpec,
    pub sampling: SamplingSpec,
    pub n: usize,
    pub seed: u64,
    /// Input subsets by name; empty means all singletons.
    #[serde(default)]
    pub subsets: Vec<Vec<String>>,
    #[serde(default = "default_indices")]
    pub indices: Vec<IndexKind>,
    #[serde(default)]
    pub sobol: Option<SobolSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default)]
    pub reduction: Option<ReductionSpec>,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub calibration: CalibrationOptions,
    /// Precompute pairwise output distances for trajectory outputs (`n <= 4096`).
    #[serde(default)]
    pub cache_output_distances: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_indices() -> Vec<IndexKind> {
    vec![IndexKind::TotalHsic, IndexKind::Dcorr]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ishigami {
        #[serde(default = "ishigami_a")]
        a: f64,
        #[serde(default = "ishigami_b")]
        b: f64,
    },
    Portfolio {
        #[serde(default)]
        rho: f64,
    },
    Cholera,
    /// Precomputed samples: an inputs CSV (header = input names) and an
    /// outputs CSV (one column for scalar outputs, several for vectors).
    ExternalSamples { inputs: PathBuf, outputs: PathBuf },
}

fn ishigami_a() -> f64 {
    hsicsa::models::ishigami::ISHIGAMI_A
}

fn ishigami_b() -> f64 {
    hsicsa::models::ishigami::ISHIGAMI_B
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
    /// `N(0, Sigma(rho))` with `rho` from the model (or the sweep).
    PortfolioGaussian,
    /// `N(theta_hat, Cov)` from an OLS fit, non-positive draws rejected.
    /// The fit is read from `fit` when given, otherwise computed.
    CholeraFitted {
        #[serde(default)]
        fit: Option<PathBuf>,
    },
    /// Independent uniforms on `theta_hat (1 +- half_width)`.
    CholeraUniform {
        #[serde(default = "ten_percent")]
        half_width: f64,
        #[serde(default)]
        fit: Option<PathBuf>,
    },
    /// Samples come with an `external_samples` model.
    External,
}

fn ten_percent() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    TotalHsic,
    Dcorr,
    Sobol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolSpec {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub n_grid: Vec<usize>,
    /// Runs use seeds `seed, seed + 1, ...`.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    /// Inputs to fix, one at a time.
    pub fix: Vec<String>,
    /// Fixed value; the sampling law's mean when absent.
    #[serde(default)]
    pub value: Option<f64>,
    pub samples: usize,
    #[serde(default)]
    pub mode: ReductionMode,
    /// Portfolio only: correlation levels to repeat the comparison at.
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub n_grid: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Largest n for which the dense oracle is timed.
    #[serde(default = "default_dense_max")]
    pub dense_max: usize,
}

fn default_repeats() -> usize {
    3
}

fn default_dense_max() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// File name prefix; the config name when absent.
    #[serde(default)]
    pub prefix: Option<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), prefix: None }
    }
}

/// A config problem, anchored to a position in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.source_name, self.message),
            (Some(l), None) => write!(f, "{}:{l}: {}", self.source_name, self.message),
            _ => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line and column of the first `"key":` in `text`.
fn locate(text: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(off) = text[from..].find(&needle) {
        let at = from + off;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            let line = text[..at].matches('\n').count() + 1;
            let col = at - text[..at].rfind('\n').map_or(0, |p| p + 1) + 1;
            return Some((line, col));
        }
        from = at + needle.len();
    }
    None
}

struct Checker<'a> {
    source_name: &'a str,
    text: &'a str,
}

impl Checker<'_> {
    fn fail(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let pos = locate(self.text, key);
        ConfigError {
            source_name: self.source_name.to_string(),
            line: pos.map(|p| p.0),
            column: pos.map(|p| p.1),
            message: message.into(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates `text`; `source_name` prefixes error messages.
    /// Relative paths inside the config resolve against `base_dir`.
    pub fn parse(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            source_name: source_name.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        })?;
        if let Some(base) = base_dir {
            cfg.resolve_paths(base);
        }
        cfg.validate(text, source_name)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: path.display().to_string(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let text = PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| ConfigError {
            source_name: format!("preset:{name}"),
            line: None,
            column: None,
            message: format!(
                "unknown preset; available: {}",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
        })?;
        Self::parse(text, &format!("preset:{name}"), None)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ModelSpec::ExternalSamples { inputs, outputs } = &mut self.model {
            fix(inputs);
            fix(outputs);
        }
        match &mut self.sampling {
            SamplingSpec::CholeraFitted { fit: Some(p) } | SamplingSpec::CholeraUniform { fit: Some(p), .. } => fix(p),
            _ => {}
        }
    }

    /// Input names implied by the model; `None` for external samples.
    pub fn model_input_names(&self) -> Option<Vec<String>> {
        match &self.model {
            ModelSpec::Ishigami { .. } => Some((1..=3).map(|i| format!("X{i}")).collect()),
            ModelSpec::Portfolio { .. } => Some((1..=5).map(|i| format!("X{i}")).collect()),
            ModelSpec::Cholera => Some(PARAM_NAMES.iter().map(|s| s.to_string()).collect()),
            ModelSpec::ExternalSamples { .. } => None,
        }
    }

    fn validate(&self, text: &str, source_name: &str) -> Result<(), ConfigError> {
        let c = Checker { source_name, text };
        if self.schema_version != SCHEMA_VERSION {
            return Err(c.fail("schema_version", format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.n < 2 {
            return Err(c.fail("n", format!("n must be >= 2, got {}", self.n)));
        }
        if self.indices.is_empty() {
            return Err(c.fail("indices", "at least one index kind is required"));
        }
        let names = self.model_input_names();
        let p = names.as_ref().map(|v| v.len());

        match (&self.model, &self.sampling) {
            (ModelSpec::Ishigami { .. }, SamplingSpec::UniformBox { .. } | SamplingSpec::Gaussian { .. }) => {}
            (ModelSpec::Portfolio { rho }, SamplingSpec::PortfolioGaussian | SamplingSpec::Gaussian { .. }) => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(c.fail("rho", format!("rho must lie in [0, 1], got {rho}")));
                }
            }
            (ModelSpec::Cholera, SamplingSpec::CholeraFitted { .. } | SamplingSpec::CholeraUniform { .. })
            | (ModelSpec::Cholera, SamplingSpec::UniformBox { .. } | SamplingSpec::Gaussian { .. }) => {}
            (ModelSpec::ExternalSamples { inputs, outputs }, SamplingSpec::External) => {
                for (key, path) in [("inputs", inputs), ("outputs", outputs)] {
                    if !path.is_file() {
                        return Err(c.fail(key, format!("file not found: {}", path.display())));
                    }
                }
            }
            _ => return Err(c.fail("law", "sampling law does not fit the selected model")),
        }
        match &self.sampling {
            SamplingSpec::UniformBox { lower, upper } => {
                if Some(lower.len()) != p || lower.len() != upper.len() {
                    return Err(c.fail("lower", format!("bounds need {} entries each", p.unwrap_or(0))));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(c.fail("lower", "need lower < upper in every coordinate"));
                }
            }
            SamplingSpec::Gaussian { mean, covariance } => {
                if Some(mean.len()) != p || covariance.len() != mean.len() || covariance.iter().any(|r| r.len() != mean.len()) {
                    return Err(c.fail("covariance", format!("mean and covariance need dimension {}", p.unwrap_or(0))));
                }
            }
            SamplingSpec::CholeraUniform { half_width, fit } => {
                if !(*half_width > 0.0 && *half_width < 1.0) {
                    return Err(c.fail("half_width", format!("half_width must lie in (0, 1), got {half_width}")));
                }
                check_fit_file(&c, fit)?;
            }
            SamplingSpec::CholeraFitted { fit } => check_fit_file(&c, fit)?,
            _ => {}
        }

        if let Some(names) = &names {
            for s in &self.subsets {
                if let Some(bad) = s.iter().find(|x| !names.contains(x)) {
                    return Err(c.fail("subsets", format!("unknown input {bad:?}; inputs are {}", names.join(", "))));
                }
            }
            if let Some(r) = &self.reduction {
                if let Some(bad) = r.fix.iter().find(|x| !names.contains(x)) {
                    return Err(c.fail("fix", format!("unknown input {bad:?}; inputs are {}", names.join(", "))));
                }
            }
        }
        if self.indices.contains(&IndexKind::Sobol) {
            if !matches!((&self.model, &self.sampling), (ModelSpec::Ishigami { .. } | ModelSpec::Portfolio { .. }, SamplingSpec::UniformBox { .. })) {
                return Err(c.fail("indices", "sobol indices need a scalar model with independent uniform inputs"));
            }
            match &self.sobol {
                Some(s) if s.n >= 100 => {}
                Some(s) => return Err(c.fail("sobol", format!("sobol.n must be >= 100, got {}", s.n))),
                None => return Err(c.fail("indices", "sobol requested without a \"sobol\" section")),
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.rho.is_empty() || sw.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(c.fail("sweep", "rho grid must be non-empty and inside [0, 1]"));
            }
        }
        if let Some(cv) = &self.convergence {
            if cv.seeds == 0 || cv.n_grid.is_empty() {
                return Err(c.fail("convergence", "need at least one seed and one n"));
            }
            if cv.n_grid[0] < 2 || cv.n_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(c.fail("n_grid", "n_grid must be strictly increasing with entries >= 2"));
            }
        }
        if let Some(r) = &self.reduction {
            if r.fix.is_empty() || r.samples < 2 || r.bins == 0 {
                return Err(c.fail("reduction", "reduction needs inputs to fix, samples >= 2 and bins >= 1"));
            }
            if r.rho.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(c.fail("reduction", "reduction rho values must lie in [0, 1]"));
            }
            if !r.rho.is_empty() && !matches!(self.model, ModelSpec::Portfolio { .. }) {
                return Err(c.fail("reduction", "reduction rho values apply to the portfolio model only"));
            }
        }
        if let Some(b) = &self.bench {
            if b.n_grid.is_empty() || b.n_grid.iter().any(|&n| n < 2) || b.repeats == 0 {
                return Err(c.fail("bench", "bench needs n_grid entries >= 2 and repeats >= 1"));
            }
        }
        Ok(())
    }

    /// Output file prefix.
    pub fn prefix(&self) -> &str {
        self.output.prefix.as_deref().unwrap_or(&self.name)
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs are written.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSpec::default();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn check_fit_file(c: &Checker<'_>, fit: &Option<PathBuf>) -> Result<(), ConfigError> {
    match fit {
        Some(p) if !p.is_file() => Err(c.fail("fit", format!("file not found: {}", p.display()))),
        _ => Ok(()),
    }
}
