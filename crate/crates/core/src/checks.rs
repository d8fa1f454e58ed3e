//! Seeded property suites behind `skm check`.
//!
//! Each suite evaluates a handful of named properties with fixed seeds and
//! reports the worst observed value against its tolerance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::analysis::descent_check;
use crate::error::{Result, SkmError};
use crate::geometry::LegendreGeometry;
use crate::iteration::{hilbert_equivalence_check, IterationConfig};
use crate::noise::{trim, NoiseModel};
use crate::operators::{MatrixScale, OperatorSpec};
use crate::vector::{dist_inf, dist_l2, norm_l2, DualVector, Vector};

/// Dimension, inverse temperature and matrix seed of the bundled softmax
/// policy operator.
pub const REFERENCE_DIM: usize = 10;
pub const REFERENCE_ETA: f64 = 2.0;
pub const REFERENCE_MATRIX_SEED: u64 = 0;

/// The softmax policy operator used by the bundled configurations.
pub fn reference_policy() -> Result<OperatorSpec> {
    OperatorSpec::softmax_policy_seeded(REFERENCE_DIM, REFERENCE_ETA, REFERENCE_MATRIX_SEED, MatrixScale::Auto)
}

const SUITE_SEED: u64 = 20_240_601;
const RANDOM_CASES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Geometry,
    Descent,
    Trim,
    Hilbert,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Geometry, Suite::Descent, Suite::Trim, Suite::Hilbert];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Descent => "descent",
            Suite::Trim => "trim",
            Suite::Hilbert => "hilbert",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SkmError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SkmError::Config(format!("unknown suite {s:?}; expected geometry, descent, trim or hilbert")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value.
    pub observed: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn below(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: observed < tolerance,
            observed,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub results: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let results = match suite {
        Suite::Geometry => geometry_suite()?,
        Suite::Descent => descent_suite()?,
        Suite::Trim => trim_suite(),
        Suite::Hilbert => hilbert_suite()?,
    };
    Ok(SuiteReport { suite, results })
}

fn rng(stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(SUITE_SEED);
    r.set_stream(stream);
    r
}

fn random_point(geom: &LegendreGeometry, d: usize, rng: &mut ChaCha20Rng) -> Vector {
    let coords: Vec<f64> = if geom.is_simplex() {
        let e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    } else {
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    Vector::new(coords).expect("finite sample")
}

fn shipped_geometries() -> Vec<LegendreGeometry> {
    let entropy = LegendreGeometry::neg_entropy_simplex();
    vec![
        LegendreGeometry::euclidean(),
        entropy.clone(),
        LegendreGeometry::p_norm(1.5).expect("valid exponent"),
        LegendreGeometry::scaled(2.0, entropy).expect("valid factor"),
    ]
}

fn kl(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * (a / b).ln()).sum()
}

fn geometry_suite() -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    for (gi, g) in shipped_geometries().into_iter().enumerate() {
        let mut rng = rng(gi as u64);
        let (mut three, mut round) = (0.0f64, 0.0f64);
        for _ in 0..RANDOM_CASES {
            let d = rng.random_range(1..=8);
            let x = random_point(&g, d, &mut rng);
            let y = random_point(&g, d, &mut rng);
            let z = random_point(&g, d, &mut rng);
            three = three.max(g.three_point_defect(&x, &y, &z)?);
            let back = g.grad_conjugate(&g.grad(&x)?)?;
            round = round.max(dist_inf(&back, &x));
        }
        out.push(PropertyResult::below(format!("{}: three-point identity", g.name()), three, 1e-10));
        out.push(PropertyResult::below(format!("{}: conjugate round trip", g.name()), round, 1e-8));
    }

    let mut rng = rng(100);
    let entropy = LegendreGeometry::neg_entropy_simplex();
    let euclid = LegendreGeometry::euclidean();
    let (mut kl_err, mut half_err) = (0.0f64, 0.0f64);
    for _ in 0..RANDOM_CASES {
        let d = rng.random_range(1..=8);
        let x = random_point(&entropy, d, &mut rng);
        let y = random_point(&entropy, d, &mut rng);
        kl_err = kl_err.max((entropy.bregman(&x, &y)? - kl(&x, &y)).abs());
        let a = random_point(&euclid, d, &mut rng);
        let b = random_point(&euclid, d, &mut rng);
        half_err = half_err.max((euclid.bregman(&a, &b)? - 0.5 * dist_l2(&a, &b).powi(2)).abs());
    }
    out.push(PropertyResult::below("neg_entropy_simplex: Bregman equals KL", kl_err, 1e-10));
    out.push(PropertyResult::below("euclidean: Bregman equals half squared distance", half_err, 1e-12));

    let zero = DualVector::zeros(4);
    let uniform = entropy.grad_conjugate(&zero)?;
    out.push(PropertyResult::below(
        "neg_entropy_simplex: conjugate of zero is uniform",
        dist_inf(&uniform, &Vector::uniform(4)),
        1e-15,
    ));
    Ok(out)
}

fn descent_suite() -> Result<Vec<PropertyResult>> {
    let op = reference_policy()?;
    let mut out = Vec::new();
    for g in [LegendreGeometry::euclidean(), LegendreGeometry::neg_entropy_simplex()] {
        let cfg = IterationConfig::new(op.clone(), g.clone()).noise(NoiseModel::gaussian(0.1)?);
        for n in [10, 100] {
            let r = descent_check(&cfg, n, 10_000)?;
            let margin = r.lhs_mean - r.rhs - 3.0 * r.lhs_std_error;
            out.push(PropertyResult {
                name: format!("{}: one-step descent at n = {n}", g.name()),
                passed: r.satisfied,
                observed: margin,
                tolerance: 0.0,
            });
        }
    }
    Ok(out)
}

/// Zeroes the `k` largest magnitudes by a full stable sort.
fn trim_by_sort(u: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[b].abs().total_cmp(&u[a].abs()));
    let mut out = u.to_vec();
    for &i in idx.iter().take(k) {
        out[i] = 0.0;
    }
    out
}

fn trim_suite() -> Vec<PropertyResult> {
    let (mut mismatches, mut count_errors, mut growth) = (0usize, 0usize, 0.0f64);
    let values = [-2.0, -1.0, 0.0, 1.0, 2.0];
    for d in 1..=5usize {
        for code in 0..5usize.pow(d as u32) {
            let u: Vec<f64> = (0..d).map(|i| values[code / 5usize.pow(i as u32) % 5]).collect();
            for k in 0..=d + 1 {
                let t = trim(&u, k);
                if t != trim_by_sort(&u, k) {
                    mismatches += 1;
                }
                let zeros = |v: &[f64]| v.iter().filter(|x| **x == 0.0).count();
                let nonzero = d - zeros(&u);
                let only_zeroing = u.iter().zip(&t).all(|(a, b)| a == b || *b == 0.0);
                if !only_zeroing || zeros(&t) != zeros(&u) + k.min(nonzero) {
                    count_errors += 1;
                }
                growth = growth.max(norm_l2(&t) - norm_l2(&u));
            }
        }
    }
    vec![
        PropertyResult::below("trim agrees with sort-based oracle", mismatches as f64, 0.5),
        PropertyResult::below("trim zeroes exactly min(k, d) coordinates", count_errors as f64, 0.5),
        PropertyResult::below("trim never increases the norm", growth, 1e-300),
    ]
}

fn hilbert_suite() -> Result<Vec<PropertyResult>> {
    let mut rng = rng(200);
    let mut worst = 0.0f64;
    for case in 0..RANDOM_CASES {
        let d = rng.random_range(1..=10);
        let op = if case % 2 == 0 {
            OperatorSpec::affine_seeded(d, case as u64, 0.9, rng.random_range(0.1..1.0))?
        } else {
            OperatorSpec::softmax_policy_seeded(d, 2.0, case as u64, MatrixScale::Auto)?
        };
        let x = Vector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let noise = Vector::new((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())?;
        let alpha = rng.random_range(1e-6..1.0 - 1e-6);
        worst = worst.max(hilbert_equivalence_check(&op, &x, alpha, &noise)?);
    }
    Ok(vec![PropertyResult::below(
        "euclidean step equals classical stochastic KM",
        worst,
        1e-12,
    )])
}
