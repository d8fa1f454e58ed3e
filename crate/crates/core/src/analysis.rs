//! Averaged residuals, step sums, rate fits and the one-step descent check.
//!
//! Everything here except [`descent_check`] is a pure function of a
//! [`Trace`]. When a trace was recorded with stride > 1 the weighted sums
//! use only the recorded rows, each with its own `α_n` as weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkmError};
use crate::iteration::{
    residual_against, run, step_from_image, GeometrySpec, IterationConfig, StepSchedule, Trace,
};
use crate::noise::{trim, trim_level, NoiseStream};
use crate::vector::{dist_l2, norm_l2};

/// Minimum number of rows for [`fit_rate`] and [`bound_envelope_check`].
pub const MIN_FIT_ROWS: usize = 100;

/// Fraction of rows used to calibrate the envelope constant.
pub const ENVELOPE_CALIBRATION_FRACTION: f64 = 0.1;

/// Slack factor on the calibrated envelope.
pub const ENVELOPE_SLACK: f64 = 1.5;

/// Minimum Monte-Carlo sample size accepted by [`descent_check`].
pub const MIN_DESCENT_TRIALS: usize = 1000;

/// Tolerance of the descent check in Monte-Carlo standard errors.
pub const DESCENT_TOLERANCE_SE: f64 = 3.0;

/// Stream ids of descent-check continuations start here so that they never
/// coincide with a run's own noise stream.
const DESCENT_STREAM_BASE: u64 = 1 << 40;

/// `A_N = Σ_{n<N} α_n` by direct summation.
pub fn step_sum(sched: &StepSchedule, n: usize) -> f64 {
    (0..n).map(|m| sched.step_size(m)).sum()
}

/// `(1/A_N)·Σ_{n<N} α_n D_n` over the recorded rows with `n < N`.
pub fn averaged_residual(trace: &Trace, n: usize) -> Result<f64> {
    let available = trace.rows.last().map_or(0, |r| r.n + 1);
    if n == 0 || n > available {
        return Err(SkmError::InsufficientTrace {
            requested: n,
            available,
        });
    }
    let (mut a, mut ad) = (0.0, 0.0);
    for row in trace.rows.iter().take_while(|r| r.n < n) {
        a += row.alpha;
        ad += row.alpha * row.bregman_residual;
    }
    Ok(ad / a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slope of `ln avg_residual` against `ln A_n`.
    pub fitted_slope: f64,
    pub theoretical_p: f64,
    /// Iteration indices of the first and last row in the fit window.
    pub window: (usize, usize),
    pub r_squared: f64,
}

/// Fits `ln avg_residual_n = b + s·ln A_n` over the last `window_fraction`
/// of the rows.
pub fn fit_rate(trace: &Trace, p_theoretical: f64, window_fraction: f64) -> Result<RateFit> {
    let rows = &trace.rows;
    if rows.len() < MIN_FIT_ROWS {
        return Err(SkmError::InsufficientTrace {
            requested: MIN_FIT_ROWS,
            available: rows.len(),
        });
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(SkmError::Config(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let len = ((rows.len() as f64 * window_fraction).ceil() as usize).clamp(2, rows.len());
    let window = &rows[rows.len() - len..];

    let mut xs = Vec::with_capacity(len);
    let mut ys = Vec::with_capacity(len);
    for r in window {
        if !(r.avg_residual > 0.0) || !(r.step_sum > 0.0) {
            return Err(SkmError::DegenerateFit(format!(
                "non-positive value at n = {} (avg_residual {}, step_sum {})",
                r.n, r.avg_residual, r.step_sum
            )));
        }
        xs.push(r.step_sum.ln());
        ys.push(r.avg_residual.ln());
    }
    let m = len as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(SkmError::DegenerateFit("step sums are constant over the window".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        fitted_slope: slope,
        theoretical_p: p_theoretical,
        window: (window[0].n, window[len - 1].n),
        r_squared,
    })
}

/// Calibrates `C` as the largest `avg_residual_n·A_n^p / (1 + Σ_{m≤n} α_m²)`
/// over the first 10% of rows and accepts iff every later row satisfies
/// `avg_residual_n ≤ 1.5·C·(1 + Σ_{m≤n} α_m²) / A_n^p`.
///
/// Returns `false` for an empty trace or one containing non-finite values.
pub fn bound_envelope_check(trace: &Trace, p: f64) -> bool {
    let rows = &trace.rows;
    if rows.is_empty() {
        return false;
    }
    let calib = ((rows.len() as f64 * ENVELOPE_CALIBRATION_FRACTION).ceil() as usize).max(1);
    let mut sq = 0.0;
    let mut c = f64::NEG_INFINITY;
    for (i, r) in rows.iter().enumerate() {
        if !(r.avg_residual.is_finite() && r.step_sum > 0.0) {
            return false;
        }
        sq += r.alpha * r.alpha;
        let scale = (1.0 + sq) / r.step_sum.powf(p);
        if i < calib {
            c = c.max(r.avg_residual / scale);
        } else if r.avg_residual > ENVELOPE_SLACK * c * scale {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentCheckReport {
    pub n_probe: usize,
    pub trials: usize,
    /// Monte-Carlo mean of `D_{n+1} + ½δ(‖ζ_n - Tζ_n‖)·α_n`.
    pub lhs_mean: f64,
    /// `(1 + L·α_n²)·D_n + σ̂²·α_n²`.
    pub rhs: f64,
    /// Standard error of `lhs_mean`.
    pub lhs_std_error: f64,
    pub d_n: f64,
    pub alpha: f64,
    pub fitted_l: f64,
    pub fitted_sigma2: f64,
    pub satisfied: bool,
}

/// Runs `config` deterministically to `ζ_{n_probe}`, then draws `trials`
/// independent one-step continuations and compares their mean against the
/// one-step descent bound.
///
/// `L` is the geometry's local gradient-Lipschitz constant at `ζ_{n_probe}`
/// and `σ̂²` the empirical second moment of the trimmed noise. The check
/// passes iff `lhs_mean ≤ rhs + 3·SE`.
pub fn descent_check(config: &IterationConfig, n_probe: usize, trials: usize) -> Result<DescentCheckReport> {
    let geom = match &config.geometry {
        GeometrySpec::Fixed(g) => g,
        GeometrySpec::Scheduled(_) => {
            return Err(SkmError::Config(
                "descent_check requires a fixed geometry, not a schedule".into(),
            ))
        }
    };
    if trials < MIN_DESCENT_TRIALS {
        return Err(SkmError::Config(format!(
            "descent_check requires at least {MIN_DESCENT_TRIALS} trials, got {trials}"
        )));
    }

    let x = if n_probe == 0 {
        config.validate()?;
        config.initial_point().into_inner()
    } else {
        let probe = config.clone().n_iters(n_probe).record_every(n_probe);
        run(&probe, None)?
            .meta
            .final_iterate
            .expect("completed run records its final iterate")
            .into_inner()
    };
    let op = &config.operator;
    let d = op.dim();
    let tx = op.apply_slice(&x);
    let d_n = residual_against(geom, &x, &tx);
    let alpha = config.steps.step_size(n_probe);
    let k = trim_level(config.trim, n_probe, d);
    let descent_term = 0.5 * geom.modulus_lower_bound(dist_l2(&x, &tx)) * alpha;

    let samples: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let mut rng = NoiseStream::new(config.seed, DESCENT_STREAM_BASE + t);
            let xi = config.noise.sample(&mut rng, d);
            let (next, _) = step_from_image(geom, &x, &tx, alpha, &xi, k, config.placement)?;
            let t_next = op.apply_slice(&next);
            let lhs = residual_against(geom, &next, &t_next) + descent_term;
            let noise_sq = norm_l2(&trim(&xi, k)).powi(2);
            Ok((lhs, noise_sq))
        })
        .collect::<Result<_>>()?;

    let m = trials as f64;
    let lhs_mean = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let var = samples.iter().map(|s| (s.0 - lhs_mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    let sigma2 = samples.iter().map(|s| s.1).sum::<f64>() / m;
    let l = geom.gradient_lipschitz_at(&x);
    let rhs = (1.0 + l * alpha * alpha) * d_n + sigma2 * alpha * alpha;
    Ok(DescentCheckReport {
        n_probe,
        trials,
        lhs_mean,
        rhs,
        lhs_std_error: se,
        d_n,
        alpha,
        fitted_l: l,
        fitted_sigma2: sigma2,
        satisfied: lhs_mean <= rhs + DESCENT_TOLERANCE_SE * se,
    })
}
