//! The stochastic Bregman-KM update and its driver loop.
//!
//! One step maps `x` to
//!
//! ```text
//! ∇θ*((1 - α)∇θ(x) + α(∇θ(T(x)) + Trim_k(ξ)))      dual placement (default)
//! ∇θ*((1 - α)∇θ(x) + α∇θ(T(x) + Trim_k(ξ)))        primal placement
//! ```
//!
//! With `θ = ½‖·‖²` both placements reduce to `(1 - α)x + α(T(x) + ξ)`.
//! On the simplex every point fed to `∇θ` is first passed through
//! [`LegendreGeometry::safeguard`] and the number of clamped coordinates is
//! recorded in the trace.

use std::borrow::Cow;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SkmError};
use crate::geometry::{GeometrySchedule, LegendreGeometry};
use crate::noise::{trim, trim_level, NoiseKind, NoiseModel, TrimSchedule, RNG_ALGORITHM};
use crate::operators::{FixedPointRef, OperatorSpec};
use crate::vector::{check_dims, dist_inf, dist_l1, dist_l2, norm_inf, Vector};

/// Upper clamp applied to every step size so that `α_n < 1`.
pub const STEP_CEILING: f64 = 1.0 - 1e-9;

/// Iterates with `‖x‖∞` above this are treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `α_n = 1/(n + a)`, `a > 1`.
    HarmonicOffset { a: f64 },
    /// `α_n = min((n + 1)^(-γ), 1 - 1e-9)`, `γ ∈ (1/2, 1]`.
    Polynomial { gamma: f64 },
    /// `α_n = α`. Does not satisfy `Σα_n² < ∞`.
    Constant { alpha: f64 },
}

impl StepSchedule {
    pub fn harmonic_offset(a: f64) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(SkmError::Config(format!("harmonic_offset requires a > 1, got {a}")));
        }
        Ok(StepSchedule::HarmonicOffset { a })
    }

    pub fn polynomial(gamma: f64) -> Result<Self> {
        if !(gamma > 0.5 && gamma <= 1.0) {
            return Err(SkmError::Config(format!(
                "polynomial requires gamma in (1/2, 1], got {gamma}"
            )));
        }
        Ok(StepSchedule::Polynomial { gamma })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SkmError::Config(format!("constant step must lie in (0, 1), got {alpha}")));
        }
        Ok(StepSchedule::Constant { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::HarmonicOffset { a } => Self::harmonic_offset(a).map(drop),
            StepSchedule::Polynomial { gamma } => Self::polynomial(gamma).map(drop),
            StepSchedule::Constant { alpha } => Self::constant(alpha).map(drop),
        }
    }

    pub fn step_size(&self, n: usize) -> f64 {
        let n = n as f64;
        let a = match *self {
            StepSchedule::HarmonicOffset { a } => 1.0 / (n + a),
            StepSchedule::Polynomial { gamma } => (n + 1.0).powf(-gamma),
            StepSchedule::Constant { alpha } => alpha,
        };
        a.min(STEP_CEILING)
    }

    /// Whether `Σα_n = ∞` and `Σα_n² < ∞`.
    pub fn is_square_summable(&self) -> bool {
        !matches!(self, StepSchedule::Constant { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            StepSchedule::HarmonicOffset { a } => format!("harmonic_offset(a={a})"),
            StepSchedule::Polynomial { gamma } => format!("polynomial(gamma={gamma})"),
            StepSchedule::Constant { alpha } => format!("constant(alpha={alpha})"),
        }
    }
}

/// Where the trimmed perturbation enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// Added to `∇θ(T(x))`.
    #[default]
    Dual,
    /// Added to `T(x)` before the mirror map.
    Primal,
}

#[derive(Debug, Clone)]
pub enum GeometrySpec {
    Fixed(LegendreGeometry),
    Scheduled(GeometrySchedule),
}

impl GeometrySpec {
    /// Geometry in which residuals are measured: the geometry itself, or the
    /// base of a schedule.
    pub fn reference(&self) -> &LegendreGeometry {
        match self {
            GeometrySpec::Fixed(g) => g,
            GeometrySpec::Scheduled(s) => s.base(),
        }
    }

    pub fn at(&self, n: usize) -> Result<Cow<'_, LegendreGeometry>> {
        match self {
            GeometrySpec::Fixed(g) => Ok(Cow::Borrowed(g)),
            GeometrySpec::Scheduled(s) => Ok(Cow::Owned(s.geometry_at(n)?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GeometrySpec::Fixed(g) => g.name(),
            GeometrySpec::Scheduled(s) => {
                let (lo, hi) = s.bounds();
                format!("schedule({}, kappa in [{lo}, {hi}])", s.base().name())
            }
        }
    }
}

impl From<LegendreGeometry> for GeometrySpec {
    fn from(g: LegendreGeometry) -> Self {
        GeometrySpec::Fixed(g)
    }
}

impl From<GeometrySchedule> for GeometrySpec {
    fn from(s: GeometrySchedule) -> Self {
        GeometrySpec::Scheduled(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Uniform,
    Point(Vector),
}

/// A complete, seeded description of one run.
#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub operator: OperatorSpec,
    pub geometry: GeometrySpec,
    pub steps: StepSchedule,
    pub noise: NoiseModel,
    pub placement: NoisePlacement,
    pub trim: TrimSchedule,
    pub n_iters: usize,
    pub init: Init,
    pub seed: u64,
    pub record_every: usize,
}

/// Stride 1 up to 10⁴ iterations, 10 beyond.
pub fn default_record_every(n_iters: usize) -> usize {
    if n_iters <= 10_000 {
        1
    } else {
        10
    }
}

impl IterationConfig {
    /// Zero noise, no trimming, `α_n = 1/(n+10)`, 1000 iterations from the
    /// uniform point.
    pub fn new(operator: OperatorSpec, geometry: impl Into<GeometrySpec>) -> Self {
        Self {
            operator,
            geometry: geometry.into(),
            steps: StepSchedule::HarmonicOffset { a: 10.0 },
            noise: NoiseModel::zero(),
            placement: NoisePlacement::Dual,
            trim: TrimSchedule::None,
            n_iters: 1000,
            init: Init::Uniform,
            seed: 0,
            record_every: 1,
        }
    }

    pub fn steps(mut self, steps: StepSchedule) -> Self {
        self.steps = steps;
        self
    }

    pub fn noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn placement(mut self, placement: NoisePlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn trim(mut self, trim: TrimSchedule) -> Self {
        self.trim = trim;
        self
    }

    /// Also resets `record_every` to [`default_record_every`].
    pub fn n_iters(mut self, n: usize) -> Self {
        self.n_iters = n;
        self.record_every = default_record_every(n);
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn initial_point(&self) -> Vector {
        match &self.init {
            Init::Uniform => Vector::uniform(self.operator.dim()),
            Init::Point(p) => p.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(SkmError::Config("n_iters must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(SkmError::Config("record_every must be >= 1".into()));
        }
        self.steps.validate()?;
        let x0 = self.initial_point();
        check_dims(self.operator.dim(), x0.dim())?;
        self.geometry.reference().check_domain(&x0)?;
        self.geometry.at(0)?.check_domain(&x0)?;
        Ok(())
    }
}

/// One recorded iteration. `step_sum` and `avg_residual` include step `n`
/// itself, so the last row of an `N`-step run carries `A_N` and the averaged
/// residual over `n < N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub alpha: f64,
    pub bregman_residual: f64,
    pub norm_residual: f64,
    pub step_sum: f64,
    pub avg_residual: f64,
    pub dist_to_ref: Option<f64>,
    pub clamp_count: usize,
}

pub const TRACE_HEADER: &str =
    "n,alpha,bregman_residual,norm_residual,step_sum,avg_residual,dist_to_ref,clamp_count";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub operator: String,
    pub dim: usize,
    pub geometry: String,
    pub steps: String,
    /// `false` for schedules violating square summability.
    pub steps_square_summable: bool,
    pub noise: String,
    pub placement: NoisePlacement,
    pub trim: String,
    pub n_iters: usize,
    pub seed: u64,
    pub noise_stream: u64,
    pub record_every: usize,
    /// `p = (q-1)/q` of the reference geometry.
    pub rate_exponent: f64,
    pub rng: String,
    pub nonexpansiveness_probe: Option<f64>,
    pub reference_residual: Option<f64>,
    pub wall_clock_s: f64,
    pub final_iterate: Option<Vector>,
    pub final_bregman_residual: f64,
    pub final_norm_residual: f64,
    pub final_dist_to_ref: Option<f64>,
    pub total_clamps: usize,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub meta: RunMetadata,
}

impl Trace {
    pub fn from_rows(rows: Vec<TraceRow>) -> Self {
        Self {
            rows,
            meta: RunMetadata::default(),
        }
    }

    /// Builds rows from per-step `(α_n, D_n)` pairs, accumulating step sums
    /// and running averages the same way [`run`] does.
    pub fn from_residuals(alphas: &[f64], residuals: &[f64]) -> Self {
        let (mut a, mut ad) = (0.0, 0.0);
        let rows = alphas
            .iter()
            .zip(residuals)
            .enumerate()
            .map(|(n, (&alpha, &d))| {
                a += alpha;
                ad += alpha * d;
                TraceRow {
                    n,
                    alpha,
                    bregman_residual: d,
                    norm_residual: f64::NAN,
                    step_sum: a,
                    avg_residual: ad / a,
                    dist_to_ref: None,
                    clamp_count: 0,
                }
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn final_avg_residual(&self) -> Option<f64> {
        self.rows.last().map(|r| r.avg_residual)
    }

    pub fn final_iterate(&self) -> Option<&Vector> {
        self.meta.final_iterate.as_ref()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| SkmError::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| SkmError::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| SkmError::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != TRACE_HEADER {
            return Err(SkmError::Config(format!(
                "{}: unexpected trace header {:?}",
                path.display(),
                header.join(",")
            )));
        }
        r.deserialize().map(|row| row.map_err(SkmError::from)).collect()
    }

    pub fn write_metadata(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(path, text + "\n").map_err(|e| SkmError::io(path, e))
    }

    /// Reads a trace CSV and its metadata sidecar.
    pub fn load(csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<Self> {
        let rows = Self::read_csv(csv_path)?;
        let meta_path = meta_path.as_ref();
        let text = std::fs::read_to_string(meta_path).map_err(|e| SkmError::io(meta_path, e))?;
        let meta = serde_json::from_str(&text)?;
        Ok(Self { rows, meta })
    }
}

/// Result of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Vector,
    /// Coordinates raised to the domain floor during the step.
    pub clamped: usize,
}

/// One Bregman-SKM step with dual noise placement.
pub fn skm_step(
    geom: &LegendreGeometry,
    op: &OperatorSpec,
    x: &Vector,
    alpha: f64,
    noise: &Vector,
    k: usize,
) -> Result<Vector> {
    skm_step_with(geom, op, x, alpha, noise, k, NoisePlacement::Dual).map(|o| o.next)
}

pub fn skm_step_with(
    geom: &LegendreGeometry,
    op: &OperatorSpec,
    x: &Vector,
    alpha: f64,
    noise: &Vector,
    k: usize,
    placement: NoisePlacement,
) -> Result<StepOutcome> {
    check_dims(op.dim(), x.dim())?;
    check_dims(x.dim(), noise.dim())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SkmError::Config(format!("step size must lie in (0, 1), got {alpha}")));
    }
    geom.check_domain(x)?;
    let tx = op.apply_slice(x);
    let (next, clamped) = step_from_image(geom, x, &tx, alpha, noise, k, placement)?;
    Ok(StepOutcome {
        next: Vector::from_raw(next),
        clamped,
    })
}

pub(crate) fn step_from_image(
    geom: &LegendreGeometry,
    x: &[f64],
    tx: &[f64],
    alpha: f64,
    noise: &[f64],
    k: usize,
    placement: NoisePlacement,
) -> Result<(Vec<f64>, usize)> {
    let perturbation = trim(noise, k);
    let mut clamped = 0;
    let gx = geom.grad(&Vector::from_raw(x.to_vec()))?;

    let dual: Vec<f64> = match placement {
        NoisePlacement::Dual => {
            let mut y = tx.to_vec();
            clamped += geom.safeguard(&mut y);
            let gy = geom.grad(&Vector::from_raw(y))?;
            gx.iter()
                .zip(gy.iter().zip(&perturbation))
                .map(|(a, (b, e))| (1.0 - alpha) * a + alpha * (b + e))
                .collect()
        }
        NoisePlacement::Primal => {
            let mut y: Vec<f64> = tx.iter().zip(&perturbation).map(|(t, e)| t + e).collect();
            clamped += geom.safeguard(&mut y);
            let gy = geom.grad(&Vector::from_raw(y))?;
            gx.iter()
                .zip(gy.iter())
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect()
        }
    };
    let dual = crate::vector::DualVector::new(dual)?;
    let mut out = geom.grad_conjugate(&dual)?.into_inner();
    clamped += geom.safeguard(&mut out);
    Ok((out, clamped))
}

/// `‖skm_step(euclidean, ...) - [(1 - α)x + α(T(x) + ξ)]‖∞`.
pub fn hilbert_equivalence_check(
    op: &OperatorSpec,
    x: &Vector,
    alpha: f64,
    noise: &Vector,
) -> Result<f64> {
    let step = skm_step(&LegendreGeometry::euclidean(), op, x, alpha, noise, 0)?;
    let tx = op.apply(x)?;
    let closed: Vec<f64> = x
        .iter()
        .zip(tx.iter().zip(noise.iter()))
        .map(|(xi, (ti, ni))| (1.0 - alpha) * xi + alpha * (ti + ni))
        .collect();
    Ok(dist_inf(&step, &closed))
}

pub(crate) fn residual_against(reference: &LegendreGeometry, x: &[f64], tx: &[f64]) -> f64 {
    let mut y = tx.to_vec();
    reference.safeguard(&mut y);
    reference.bregman_unchecked(x, &y)
}

fn describe_noise(noise: &NoiseModel) -> String {
    match noise.kind() {
        NoiseKind::Zero => "zero".into(),
        NoiseKind::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
        NoiseKind::StudentT { dof, scale } => format!("student_t(dof={dof}, scale={scale})"),
    }
}

fn describe_trim(trim: TrimSchedule) -> String {
    match trim {
        TrimSchedule::None => "none".into(),
        TrimSchedule::Fixed(k) => format!("fixed({k})"),
        TrimSchedule::LogSchedule => "log_schedule".into(),
    }
}

/// Runs `config.n_iters` steps and records the trace.
///
/// Residuals are measured in [`GeometrySpec::reference`]. One noise vector is
/// drawn per step from the stream `(config.seed, config.noise.seed())`, then
/// trimmed at level `trim_level(n)`. Rows are recorded every
/// `record_every` steps and always at the first and last step.
pub fn run(config: &IterationConfig, reference: Option<&FixedPointRef>) -> Result<Trace> {
    config.validate()?;
    let started = Instant::now();
    let op = &config.operator;
    let d = op.dim();
    let ref_geom = config.geometry.reference();
    let n_iters = config.n_iters;
    let stride = config.record_every;
    if let Some(r) = reference {
        check_dims(d, r.point.dim())?;
    }

    let mut meta = RunMetadata {
        operator: op.name().into(),
        dim: d,
        geometry: config.geometry.describe(),
        steps: config.steps.describe(),
        steps_square_summable: config.steps.is_square_summable(),
        noise: describe_noise(&config.noise),
        placement: config.placement,
        trim: describe_trim(config.trim),
        n_iters,
        seed: config.seed,
        noise_stream: config.noise.seed(),
        record_every: stride,
        rate_exponent: ref_geom.rate_exponent(),
        rng: RNG_ALGORITHM.into(),
        nonexpansiveness_probe: op.probe_value(),
        reference_residual: reference.map(|r| r.residual_norm),
        ..RunMetadata::default()
    };

    let mut x = config.initial_point().into_inner();
    let mut rng = config.noise.stream(config.seed);
    let mut rows = Vec::with_capacity(n_iters / stride + 2);
    let (mut step_sum, mut weighted) = (0.0, 0.0);
    let mut total_clamps = 0;

    for n in 0..n_iters {
        let geom = config.geometry.at(n)?;
        let tx = op.apply_slice(&x);
        let d_n = residual_against(ref_geom, &x, &tx);
        let alpha = config.steps.step_size(n);
        step_sum += alpha;
        weighted += alpha * d_n;

        let xi = config.noise.sample(&mut rng, d);
        let k = trim_level(config.trim, n, d);
        let (next, clamped) = step_from_image(&geom, &x, &tx, alpha, &xi, k, config.placement)?;
        total_clamps += clamped;

        if n % stride == 0 || n + 1 == n_iters {
            rows.push(TraceRow {
                n,
                alpha,
                bregman_residual: d_n,
                norm_residual: dist_l2(&x, &tx),
                step_sum,
                avg_residual: weighted / step_sum,
                dist_to_ref: reference.map(|r| dist_l1(&x, &r.point)),
                clamp_count: clamped,
            });
        }

        if next.iter().any(|v| !v.is_finite()) || norm_inf(&next) > DIVERGENCE_THRESHOLD {
            meta.diverged = true;
            meta.total_clamps = total_clamps;
            meta.final_iterate = Vector::new(x).ok();
            meta.wall_clock_s = started.elapsed().as_secs_f64();
            return Err(SkmError::Diverged {
                step: n + 1,
                trace: Box::new(Trace { rows, meta }),
            });
        }
        x = next;
    }

    let tx = op.apply_slice(&x);
    meta.final_bregman_residual = residual_against(ref_geom, &x, &tx);
    meta.final_norm_residual = dist_l2(&x, &tx);
    meta.final_dist_to_ref = reference.map(|r| dist_l1(&x, &r.point));
    meta.total_clamps = total_clamps;
    meta.final_iterate = Some(Vector::from_raw(x));
    meta.wall_clock_s = started.elapsed().as_secs_f64();
    Ok(Trace { rows, meta })
}
