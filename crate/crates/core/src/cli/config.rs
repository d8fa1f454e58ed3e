//! JSON experiment files.
//!
//! Shared settings sit at the top level; each entry of `runs` names a variant
//! and may override `steps`, `noise`, `noise_placement`, `trim` and
//! `record_every`. Unknown keys are rejected and every error carries the
//! line of the file it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{GeometrySchedule, LegendreGeometry, ScaleFn};
use crate::iteration::{default_record_every, GeometrySpec, Init, IterationConfig, NoisePlacement, StepSchedule};
use crate::noise::{NoiseModel, TrimSchedule};
use crate::operators::{MatrixScale, OperatorSpec};
use crate::vector::Vector;
use crate::SkmError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub schema: u32,
    pub name: String,
    pub operator: OperatorConfig,
    pub n_iters: usize,
    pub steps: StepsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub noise_placement: NoisePlacement,
    #[serde(default)]
    pub trim: TrimConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    pub seeds: Vec<u64>,
    pub outputs: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default = "default_report")]
    pub report: Vec<Metric>,
    pub runs: Vec<RunConfig>,
}

fn default_report() -> Vec<Metric> {
    vec![Metric::FinalAvgResidual, Metric::FinalDistToRefL1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FinalAvgResidual,
    #[serde(rename = "final_dist_to_ref_l1")]
    FinalDistToRefL1,
    RateFit,
    EnvelopeCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    SoftmaxPolicy {
        dim: usize,
        eta: f64,
        matrix_seed: u64,
        #[serde(default)]
        matrix_scale: MatrixScaleConfig,
    },
    AffineAverage {
        dim: usize,
        matrix_seed: u64,
        matrix_norm: f64,
        lambda: f64,
    },
    Identity {
        dim: usize,
    },
}

impl OperatorConfig {
    pub fn build(&self) -> crate::Result<OperatorSpec> {
        match *self {
            OperatorConfig::SoftmaxPolicy {
                dim,
                eta,
                matrix_seed,
                matrix_scale,
            } => OperatorSpec::softmax_policy_seeded(dim, eta, matrix_seed, matrix_scale.into()),
            OperatorConfig::AffineAverage {
                dim,
                matrix_seed,
                matrix_norm,
                lambda,
            } => OperatorSpec::affine_seeded(dim, matrix_seed, matrix_norm, lambda),
            OperatorConfig::Identity { dim } => OperatorSpec::identity(dim),
        }
    }
}

/// `"auto"` or a target spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixScaleConfig {
    Keyword(ScaleKeyword),
    Norm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKeyword {
    Auto,
}

impl Default for MatrixScaleConfig {
    fn default() -> Self {
        MatrixScaleConfig::Keyword(ScaleKeyword::Auto)
    }
}

impl From<MatrixScaleConfig> for MatrixScale {
    fn from(c: MatrixScaleConfig) -> Self {
        match c {
            MatrixScaleConfig::Keyword(ScaleKeyword::Auto) => MatrixScale::Auto,
            MatrixScaleConfig::Norm(s) => MatrixScale::SpectralNorm(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsConfig {
    HarmonicOffset { a: f64 },
    Polynomial { gamma: f64 },
    Constant { alpha: f64 },
}

impl StepsConfig {
    pub fn build(self) -> crate::Result<StepSchedule> {
        match self {
            StepsConfig::HarmonicOffset { a } => StepSchedule::harmonic_offset(a),
            StepsConfig::Polynomial { gamma } => StepSchedule::polynomial(gamma),
            StepsConfig::Constant { alpha } => StepSchedule::constant(alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Zero {
        #[serde(default)]
        seed: u64,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    StudentT {
        dof: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::Zero { seed: 0 }
    }
}

impl NoiseConfig {
    pub fn build(self) -> crate::Result<NoiseModel> {
        match self {
            NoiseConfig::Zero { seed } => Ok(NoiseModel::zero().with_seed(seed)),
            NoiseConfig::Gaussian { sigma, seed } => Ok(NoiseModel::gaussian(sigma)?.with_seed(seed)),
            NoiseConfig::StudentT { dof, scale, seed } => Ok(NoiseModel::student_t(dof, scale)?.with_seed(seed)),
        }
    }
}

/// `"none"`, `"log_schedule"` or `{"fixed": k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimConfig {
    #[default]
    None,
    LogSchedule,
    Fixed(usize),
}

impl From<TrimConfig> for TrimSchedule {
    fn from(c: TrimConfig) -> Self {
        match c {
            TrimConfig::None => TrimSchedule::None,
            TrimConfig::LogSchedule => TrimSchedule::LogSchedule,
            TrimConfig::Fixed(k) => TrimSchedule::Fixed(k),
        }
    }
}

/// `"uniform"` or an explicit starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitConfig {
    Keyword(InitKeyword),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKeyword {
    Uniform,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Keyword(InitKeyword::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "default_ref_tol")]
    pub tol: f64,
    #[serde(default = "default_ref_iters")]
    pub max_iter: usize,
}

fn default_ref_tol() -> f64 {
    1e-12
}

fn default_ref_iters() -> usize {
    100_000
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            tol: default_ref_tol(),
            max_iter: default_ref_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Euclidean {},
    NegEntropySimplex {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_floor: Option<f64>,
    },
    PNorm {
        p: f64,
    },
    /// `factor·θ_base`.
    Scaled {
        base: Box<GeometryConfig>,
        factor: f64,
    },
    /// `κ_n·θ_base` with `κ_n = 1 + amplitude/(n+1)` clamped to `[lower, upper]`.
    Adaptive {
        base: Box<GeometryConfig>,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        lower: f64,
        #[serde(default = "two")]
        upper: f64,
    },
}

fn two() -> f64 {
    2.0
}

impl GeometryConfig {
    pub fn build_fixed(&self) -> crate::Result<LegendreGeometry> {
        match self {
            GeometryConfig::Euclidean {} => Ok(LegendreGeometry::euclidean()),
            GeometryConfig::NegEntropySimplex { domain_floor } => {
                let g = LegendreGeometry::neg_entropy_simplex();
                match domain_floor {
                    Some(eps) => g.with_domain_floor(*eps),
                    None => Ok(g),
                }
            }
            GeometryConfig::PNorm { p } => LegendreGeometry::p_norm(*p),
            GeometryConfig::Scaled { base, factor } => LegendreGeometry::scaled(*factor, base.build_fixed()?),
            GeometryConfig::Adaptive { .. } => Err(SkmError::Config(
                "an adaptive geometry cannot be the base of another geometry".into(),
            )),
        }
    }

    pub fn build(&self) -> crate::Result<GeometrySpec> {
        match self {
            GeometryConfig::Adaptive {
                base,
                amplitude,
                lower,
                upper,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(SkmError::Config(format!("amplitude must be >= 0, got {amplitude}")));
                }
                let sched = GeometrySchedule::new(
                    base.build_fixed()?,
                    ScaleFn::Harmonic { amplitude: *amplitude },
                    *lower,
                    *upper,
                )?;
                Ok(GeometrySpec::Scheduled(sched))
            }
            other => Ok(GeometrySpec::Fixed(other.build_fixed()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_placement: Option<NoisePlacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<TrimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

/// A configuration problem, anchored to a line of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "{}:{}:{}: {}", self.path.display(), self.line, c, self.message),
            None => write!(f, "{}:{}: {}", self.path.display(), self.line, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One fully resolved run variant.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    /// Template with `seed = 0`.
    pub config: IterationConfig,
    /// Resolved settings echoed into every run's metadata.
    pub echo: serde_json::Value,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub operator: OperatorSpec,
    pub reference: Option<ReferenceConfig>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub outputs: PathBuf,
    pub report: Vec<Metric>,
}

impl Experiment {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: 0,
            column: None,
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file: ExperimentFile = serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: e.line(),
            column: Some(e.column()),
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_owned(),
        })?;
        let anchored = |needle: &str, message: String| ConfigError {
            path: path.to_path_buf(),
            line: line_of(text, needle),
            column: None,
            message,
        };
        file.resolve().map_err(|(needle, msg)| anchored(&needle, msg))
    }

    /// Replaces the seed list.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self, SkmError> {
        check_seeds(&seeds).map_err(SkmError::Config)?;
        self.seeds = seeds;
        Ok(self)
    }

    pub fn with_outputs(mut self, dir: impl Into<PathBuf>) -> Self {
        self.outputs = dir.into();
        self
    }

    pub fn wants(&self, m: Metric) -> bool {
        self.report.contains(&m)
    }
}

/// 1-based line of the first occurrence of `needle`, or 1.
fn line_of(text: &str, needle: &str) -> usize {
    text.find(needle)
        .map(|i| text[..i].matches('\n').count() + 1)
        .unwrap_or(1)
}

fn check_seeds(seeds: &[u64]) -> Result<(), String> {
    if seeds.is_empty() {
        return Err("seeds must be non-empty".into());
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!("seed {} appears more than once", w[0]));
    }
    Ok(())
}

impl ExperimentFile {
    /// Validates and resolves. Errors carry a search key used to locate the
    /// offending line.
    fn resolve(&self) -> Result<Experiment, (String, String)> {
        let key = |k: &str| format!("\"{k}\"");
        if self.schema != SCHEMA_VERSION {
            return Err((
                key("schema"),
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        check_seeds(&self.seeds).map_err(|m| (key("seeds"), m))?;
        if self.runs.is_empty() {
            return Err((key("runs"), "runs must be non-empty".into()));
        }
        if self.n_iters == 0 {
            return Err((key("n_iters"), "n_iters must be >= 1".into()));
        }
        self.steps.build().map_err(|e| (key("steps"), e.to_string()))?;
        self.noise.build().map_err(|e| (key("noise"), e.to_string()))?;
        let operator = self.operator.build().map_err(|e| (key("operator"), e.to_string()))?;
        let init = match &self.init {
            InitConfig::Keyword(InitKeyword::Uniform) => Init::Uniform,
            InitConfig::Point(p) => Init::Point(Vector::new(p.clone()).map_err(|e| (key("init"), e.to_string()))?),
        };

        let mut variants = Vec::with_capacity(self.runs.len());
        for (i, run) in self.runs.iter().enumerate() {
            let anchor = key(&run.name);
            if self.runs[..i].iter().any(|r| r.name == run.name) {
                return Err((anchor, format!("duplicate run name {:?}", run.name)));
            }
            if run.name.is_empty() || run.name.contains(['/', '\\']) || run.name.starts_with('.') {
                return Err((anchor, format!("run name {:?} is not a valid directory name", run.name)));
            }
            let err = |e: SkmError| (anchor.clone(), format!("run {:?}: {e}", run.name));
            let geometry = run.geometry.build().map_err(err)?;
            let steps_cfg = run.steps.unwrap_or(self.steps);
            let noise_cfg = run.noise.unwrap_or(self.noise);
            let trim_cfg = run.trim.unwrap_or(self.trim);
            let placement = run.noise_placement.unwrap_or(self.noise_placement);
            let record_every = run
                .record_every
                .or(self.record_every)
                .unwrap_or_else(|| default_record_every(self.n_iters));

            let config = IterationConfig::new(operator.clone(), geometry)
                .steps(steps_cfg.build().map_err(err)?)
                .noise(noise_cfg.build().map_err(err)?)
                .placement(placement)
                .trim(trim_cfg.into())
                .n_iters(self.n_iters)
                .record_every(record_every)
                .init(init.clone());
            config.validate().map_err(err)?;

            let echo = serde_json::json!({
                "experiment": self.name,
                "variant": run.name,
                "operator": self.operator,
                "geometry": run.geometry,
                "steps": steps_cfg,
                "noise": noise_cfg,
                "noise_placement": placement,
                "trim": trim_cfg,
                "init": self.init,
                "n_iters": self.n_iters,
                "record_every": record_every,
            });
            variants.push(Variant {
                name: run.name.clone(),
                config,
                echo,
            });
        }

        Ok(Experiment {
            name: self.name.clone(),
            operator,
            reference: self.reference,
            variants,
            seeds: self.seeds.clone(),
            outputs: self.outputs.clone(),
            report: self.report.clone(),
        })
    }
}
