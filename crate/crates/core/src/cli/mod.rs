//! The `skm` command line.
//!
//! ```text
//! skm run <config.json> [--seeds a,b,c] [--out DIR]
//! skm rate-study --geometry G --gamma 0.6,0.75,0.9 --n N --seeds K
//! skm check <geometry|descent|trim|hilbert>
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a run diverged,
//! 3 a property check failed.

pub mod config;
pub mod summary;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{bound_envelope_check, fit_rate, step_sum};
use crate::checks::{reference_policy, run_suite, Suite};
use crate::error::{Result, SkmError};
use crate::geometry::LegendreGeometry;
use crate::iteration::{run, IterationConfig, StepSchedule, Trace};
use crate::noise::NoiseModel;
use crate::operators::{fixed_point_oracle, FixedPointRef, OperatorSpec};

use config::{Experiment, Metric};
use summary::{metadata_path, render, summarize, trace_path, RATE_WINDOW};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "skm", version, about = "Stochastic Bregman-KM fixed-point experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every variant of an experiment file over its seeds.
    Run {
        config: PathBuf,
        /// Comma-separated seeds replacing the file's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory replacing the file's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit decay rates under polynomial steps `α_n = (n+1)^-γ`.
    RateStudy {
        /// euclidean, neg_entropy_simplex or p_norm:<p>.
        #[arg(long, default_value = "euclidean")]
        geometry: String,
        /// Comma-separated exponents in (1/2, 1).
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Number of seeds, 0..K.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = StudyOperator::Affine)]
        operator: StudyOperator,
        /// Gaussian noise level; 0 runs noiselessly.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Directory for `rate_study.json` and `rate_study.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded property suite.
    Check {
        #[arg(value_parser = parse_suite)]
        suite: Suite,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyOperator {
    /// The bundled 10-dimensional softmax policy map.
    Softmax,
    /// A seeded averaged affine map on R^10.
    Affine,
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: SkmError| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config, seeds, out } => cmd_run(&config, seeds, out),
        Command::RateStudy {
            geometry,
            gamma,
            n,
            seeds,
            operator,
            sigma,
            out,
        } => cmd_rate_study(&geometry, &gamma, n, seeds, operator, sigma, out.as_deref()),
        Command::Check { suite } => cmd_check(suite),
    }
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SkmError::io(path, e))
}

fn cmd_run(path: &Path, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> i32 {
    let mut exp = match Experiment::load(path) {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    if let Some(s) = seeds {
        exp = match exp.with_seeds(s) {
            Ok(e) => e,
            Err(e) => return fail(format!("--seeds: {e}")),
        };
    }
    if let Some(o) = out {
        exp = exp.with_outputs(o);
    }
    match execute(&exp) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            if outcome.diverged > 0 {
                eprintln!("{} run(s) diverged; see the summary's diverged column", outcome.diverged);
                EXIT_DIVERGED
            } else {
                EXIT_OK
            }
        }
        Err(e) => fail(e),
    }
}

/// What [`execute`] produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: summary::SummaryTable,
    pub text: String,
    pub diverged: usize,
}

/// Runs every `(variant, seed)` pair of `exp` in parallel, writes traces,
/// metadata and the summary under `exp.outputs`, and returns the summary.
pub fn execute(exp: &Experiment) -> Result<RunOutcome> {
    let reference = reference_point(exp)?;
    let out = &exp.outputs;
    for v in &exp.variants {
        let dir = out.join(&v.name);
        std::fs::create_dir_all(&dir).map_err(|e| SkmError::io(&dir, e))?;
    }

    let jobs: Vec<(usize, u64)> = (0..exp.variants.len())
        .flat_map(|v| exp.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<Result<Trace>> = jobs
        .par_iter()
        .map(|&(vi, seed)| {
            let variant = &exp.variants[vi];
            let cfg = variant.config.clone().seed(seed);
            let mut trace = match run(&cfg, reference.as_ref()) {
                Ok(t) => t,
                Err(SkmError::Diverged { trace, .. }) => *trace,
                Err(e) => return Err(e),
            };
            trace.meta.config = Some(variant.echo.clone());
            trace.write_csv(trace_path(out, &variant.name, seed))?;
            trace.write_metadata(metadata_path(out, &variant.name, seed))?;
            Ok(trace)
        })
        .collect();

    let mut grouped: Vec<(String, Vec<Trace>)> =
        exp.variants.iter().map(|v| (v.name.clone(), Vec::new())).collect();
    for (&(vi, _), r) in jobs.iter().zip(results) {
        grouped[vi].1.push(r?);
    }
    let diverged = grouped.iter().flat_map(|g| &g.1).filter(|t| t.meta.diverged).count();
    let table = summarize(&exp.name, &exp.report, &grouped);
    let text = render(&table);
    let json = serde_json::to_string_pretty(&table)? + "\n";
    write_text(&out.join("summary.json"), &json)?;
    write_text(&out.join("summary.txt"), &text)?;
    Ok(RunOutcome { table, text, diverged })
}

fn reference_point(exp: &Experiment) -> Result<Option<FixedPointRef>> {
    if exp.reference.is_none() && !exp.wants(Metric::FinalDistToRefL1) {
        return Ok(None);
    }
    let rc = exp.reference.unwrap_or_default();
    match fixed_point_oracle(&exp.operator, rc.tol, rc.max_iter) {
        Ok(r) => Ok(Some(r)),
        Err(SkmError::NoConvergence { best, .. }) => {
            eprintln!(
                "warning: reference solver stopped at residual {:.3e}; distances use the best iterate",
                best.residual_norm
            );
            Ok(Some(*best))
        }
        Err(e) => Err(e),
    }
}

fn parse_geometry(s: &str) -> Result<LegendreGeometry> {
    match s {
        "euclidean" => Ok(LegendreGeometry::euclidean()),
        "neg_entropy_simplex" | "entropy" => Ok(LegendreGeometry::neg_entropy_simplex()),
        other => match other.strip_prefix("p_norm:").map(str::parse::<f64>) {
            Some(Ok(p)) => LegendreGeometry::p_norm(p),
            _ => Err(SkmError::Config(format!(
                "unknown geometry {other:?}; expected euclidean, neg_entropy_simplex or p_norm:<p>"
            ))),
        },
    }
}

/// Dimension, seed, spectral norm and averaging weight of the rate-study
/// affine operator.
const STUDY_AFFINE: (usize, u64, f64, f64) = (10, 0, 0.9, 0.5);

/// One line of the rate-study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyRow {
    pub gamma: f64,
    pub step_sum: f64,
    pub median_slope: Option<f64>,
    pub theoretical_exponent_in_n: f64,
    pub theoretical_exponent_in_a: f64,
    pub envelope_pass_rate: f64,
    pub seeds: u64,
    pub diverged: usize,
}

/// Runs each `γ` over seeds `0..seeds` and fits the averaged-residual decay.
pub fn rate_study(
    geometry: &LegendreGeometry,
    operator: &OperatorSpec,
    gammas: &[f64],
    n: usize,
    seeds: u64,
    noise: NoiseModel,
) -> Result<Vec<RateStudyRow>> {
    if gammas.is_empty() {
        return Err(SkmError::Config("at least one gamma is required".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.5 && **g < 1.0)) {
        return Err(SkmError::Config(format!("gamma must lie in (1/2, 1), got {g}")));
    }
    if seeds == 0 {
        return Err(SkmError::Config("seeds must be >= 1".into()));
    }
    let p = geometry.rate_exponent();
    let jobs: Vec<(usize, u64)> = (0..gammas.len()).flat_map(|g| (0..seeds).map(move |s| (g, s))).collect();
    let traces: Vec<Result<Option<Trace>>> = jobs
        .par_iter()
        .map(|&(gi, seed)| {
            let cfg = IterationConfig::new(operator.clone(), geometry.clone())
                .steps(StepSchedule::polynomial(gammas[gi])?)
                .noise(noise)
                .n_iters(n)
                .seed(seed);
            match run(&cfg, None) {
                Ok(t) => Ok(Some(t)),
                Err(SkmError::Diverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut per_gamma: Vec<Vec<Option<Trace>>> = vec![Vec::new(); gammas.len()];
    for (&(gi, _), t) in jobs.iter().zip(traces) {
        per_gamma[gi].push(t?);
    }
    Ok(gammas
        .iter()
        .zip(per_gamma)
        .map(|(&gamma, ts)| {
            let ok: Vec<&Trace> = ts.iter().flatten().collect();
            let slopes: Vec<f64> = ok
                .iter()
                .filter_map(|t| fit_rate(t, p, RATE_WINDOW).ok())
                .map(|f| f.fitted_slope)
                .collect();
            let passes = ok.iter().filter(|t| bound_envelope_check(t, p)).count();
            RateStudyRow {
                gamma,
                step_sum: step_sum(&StepSchedule::Polynomial { gamma }, n),
                median_slope: summary::median(&slopes),
                theoretical_exponent_in_n: -p * (1.0 - gamma),
                theoretical_exponent_in_a: -p,
                envelope_pass_rate: passes as f64 / seeds as f64,
                seeds,
                diverged: ts.len() - ok.len(),
            }
        })
        .collect())
}

fn render_rate_study(rows: &[RateStudyRow], title: &str) -> String {
    let headers: Vec<String> = ["gamma", "A_N", "fitted slope", "-p(1-gamma)", "-p", "envelope pass", "diverged"]
        .map(String::from)
        .to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.gamma),
                format!("{:.4}", r.step_sum),
                r.median_slope.map_or("-".into(), |s| format!("{s:.4}")),
                format!("{:.4}", r.theoretical_exponent_in_n),
                format!("{:.4}", r.theoretical_exponent_in_a),
                format!("{:.0}%", 100.0 * r.envelope_pass_rate),
                r.diverged.to_string(),
            ]
        })
        .collect();
    summary::aligned(&headers, &body, title)
}

fn cmd_rate_study(
    geometry: &str,
    gammas: &[f64],
    n: usize,
    seeds: u64,
    operator: StudyOperator,
    sigma: f64,
    out: Option<&Path>,
) -> i32 {
    let setup = || -> Result<(LegendreGeometry, OperatorSpec, NoiseModel)> {
        let geom = parse_geometry(geometry)?;
        let op = match operator {
            StudyOperator::Softmax => reference_policy()?,
            StudyOperator::Affine => {
                let (d, seed, norm, lambda) = STUDY_AFFINE;
                OperatorSpec::affine_seeded(d, seed, norm, lambda)?
            }
        };
        let noise = if sigma == 0.0 { NoiseModel::zero() } else { NoiseModel::gaussian(sigma)? };
        if n < 100 {
            return Err(SkmError::Config(format!("--n must be >= 100 for a rate fit, got {n}")));
        }
        Ok((geom, op, noise))
    };
    let (geom, op, noise) = match setup() {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let rows = match rate_study(&geom, &op, gammas, n, seeds, noise) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let title = format!("rate study: {} / {} / N = {n} / {seeds} seeds\n", geom.name(), op.name());
    let text = render_rate_study(&rows, &title);
    print!("{text}");
    if let Some(dir) = out {
        let write = || -> Result<()> {
            std::fs::create_dir_all(dir).map_err(|e| SkmError::io(dir, e))?;
            write_text(&dir.join("rate_study.json"), &(serde_json::to_string_pretty(&rows)? + "\n"))?;
            let path = dir.join("rate_study.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| SkmError::io(&path, e))
        };
        if let Err(e) = write() {
            return fail(e);
        }
    }
    if rows.iter().any(|r| r.diverged > 0) {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

fn cmd_check(suite: Suite) -> i32 {
    let report = match run_suite(suite) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    let headers: Vec<String> = ["property", "result", "observed", "tolerance"].map(String::from).to_vec();
    let body: Vec<Vec<String>> = report
        .results
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                if r.passed { "PASS" } else { "FAIL" }.into(),
                format!("{:.3e}", r.observed),
                format!("{:.1e}", r.tolerance),
            ]
        })
        .collect();
    print!("{}", summary::aligned(&headers, &body, &format!("check {suite}\n")));
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
