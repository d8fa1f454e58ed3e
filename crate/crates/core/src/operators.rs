//! Nonexpansive operators with computable fixed points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkmError};
use crate::geometry::softmax;
use crate::vector::{check_dims, dist_l2, Vector};

/// Spectral norm given to a freshly drawn policy matrix before the
/// nonexpansiveness probe runs.
pub const DEFAULT_MATRIX_NORM: f64 = 0.4;

/// Sampled pairs used when certifying a generated matrix.
pub const PROBE_TRIALS: usize = 10_000;

const NONEXPANSIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MatrixScale {
    /// Normalize to [`DEFAULT_MATRIX_NORM`].
    #[default]
    Auto,
    /// Target spectral norm.
    SpectralNorm(f64),
}

impl MatrixScale {
    fn target(self) -> f64 {
        match self {
            MatrixScale::Auto => DEFAULT_MATRIX_NORM,
            MatrixScale::SpectralNorm(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `T(x) = softmax(η·A·x)`.
    SoftmaxPolicy { matrix: DMatrix<f64>, eta: f64 },
    /// `T(x) = (1-λ)·x + λ·(M·x + b)`.
    AffineAverage {
        matrix: DMatrix<f64>,
        offset: Vector,
        lambda: f64,
    },
    Identity,
}

/// An immutable nonexpansive map on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kind: OperatorKind,
    dim: usize,
    probe: Option<f64>,
}

/// A certified approximate fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRef {
    pub point: Vector,
    /// `‖point - T(point)‖₂`.
    pub residual_norm: f64,
    pub iterations_used: usize,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(SkmError::Config(format!(
            "operator matrix must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SkmError::Config("operator matrix has non-finite entries".into()));
    }
    Ok(m.nrows())
}

fn gaussian_matrix(dim: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        dim,
        dim,
        (0..dim * dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

impl OperatorSpec {
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(SkmError::Config("operator dimension must be >= 1".into()));
        }
        Ok(Self {
            kind: OperatorKind::Identity,
            dim,
            probe: None,
        })
    }

    pub fn softmax_policy(matrix: DMatrix<f64>, eta: f64) -> Result<Self> {
        let dim = check_square(&matrix)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SkmError::Config(format!("eta must be positive, got {eta}")));
        }
        Ok(Self {
            kind: OperatorKind::SoftmaxPolicy { matrix, eta },
            dim,
            probe: None,
        })
    }

    /// Draws `A` with i.i.d. standard normal entries from `matrix_seed`,
    /// normalizes it to the requested spectral norm, and shrinks it by
    /// bisection until the nonexpansiveness probe certifies the map. The
    /// final probe value is kept in [`probe_value`](Self::probe_value).
    pub fn softmax_policy_seeded(
        dim: usize,
        eta: f64,
        matrix_seed: u64,
        scale: MatrixScale,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(SkmError::Config("operator dimension must be >= 1".into()));
        }
        let target = scale.target();
        if !(target >= 0.0 && target.is_finite()) {
            return Err(SkmError::Config(format!("matrix scale must be >= 0, got {target}")));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(matrix_seed);
        let raw = gaussian_matrix(dim, &mut rng);
        let norm = spectral_norm(&raw);
        let base = if norm > 0.0 { raw * (target / norm) } else { raw };

        let probe_at = |s: f64| -> Result<(Self, f64)> {
            let op = Self::softmax_policy(&base * s, eta)?;
            let p = nonexpansiveness_probe(&op, PROBE_TRIALS, matrix_seed);
            Ok((op, p))
        };

        let (mut op, mut probe) = probe_at(1.0)?;
        if probe > 1.0 + NONEXPANSIVE_SLACK {
            let (mut lo, mut hi) = (0.0, 1.0);
            let (mut lo_op, mut lo_probe) = probe_at(0.0)?;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let (cand, p) = probe_at(mid)?;
                if p <= 1.0 + NONEXPANSIVE_SLACK {
                    lo = mid;
                    lo_op = cand;
                    lo_probe = p;
                } else {
                    hi = mid;
                }
            }
            op = lo_op;
            probe = lo_probe;
        }
        op.probe = Some(probe);
        Ok(op)
    }

    /// Checks `‖M‖₂ <= 1 + 1e-9` and `λ ∈ [0, 1]`.
    pub fn affine_average(matrix: DMatrix<f64>, offset: Vector, lambda: f64) -> Result<Self> {
        let dim = check_square(&matrix)?;
        check_dims(dim, offset.dim())?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(SkmError::Config(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        let norm = spectral_norm(&matrix);
        if norm > 1.0 + NONEXPANSIVE_SLACK {
            return Err(SkmError::Config(format!(
                "affine operator matrix has spectral norm {norm} > 1"
            )));
        }
        Ok(Self {
            kind: OperatorKind::AffineAverage {
                matrix,
                offset,
                lambda,
            },
            dim,
            probe: None,
        })
    }

    /// Gaussian `M` scaled to spectral norm `norm`, offset `b ~ N(0, 0.01 I)`.
    pub fn affine_seeded(dim: usize, seed: u64, norm: f64, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(SkmError::Config("operator dimension must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&norm) {
            return Err(SkmError::Config(format!("affine norm must lie in [0, 1], got {norm}")));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let raw = gaussian_matrix(dim, &mut rng);
        let s = spectral_norm(&raw);
        let m = if s > 0.0 { raw * (norm / s) } else { raw };
        let b: Vec<f64> = (0..dim)
            .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::affine_average(m, Vector::new(b)?, lambda)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Probe value recorded when the operator was generated from a seed.
    pub fn probe_value(&self) -> Option<f64> {
        self.probe
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            OperatorKind::SoftmaxPolicy { .. } => "softmax_policy",
            OperatorKind::AffineAverage { .. } => "affine_average",
            OperatorKind::Identity => "identity",
        }
    }

    /// Spectral norm of the operator's matrix, if it has one.
    pub fn matrix_norm(&self) -> Option<f64> {
        match &self.kind {
            OperatorKind::SoftmaxPolicy { matrix, .. }
            | OperatorKind::AffineAverage { matrix, .. } => Some(spectral_norm(matrix)),
            OperatorKind::Identity => None,
        }
    }

    /// `T(x)`.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dims(self.dim, x.dim())?;
        Ok(Vector::from_raw(self.apply_slice(x)))
    }

    pub(crate) fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            OperatorKind::SoftmaxPolicy { matrix, eta } => {
                let logits = matrix * DVector::from_column_slice(x);
                let scaled: Vec<f64> = logits.iter().map(|v| eta * v).collect();
                softmax(&scaled)
            }
            OperatorKind::AffineAverage {
                matrix,
                offset,
                lambda,
            } => {
                let mx = matrix * DVector::from_column_slice(x);
                x.iter()
                    .zip(mx.iter().zip(offset.iter()))
                    .map(|(xi, (mi, bi))| (1.0 - lambda) * xi + lambda * (mi + bi))
                    .collect()
            }
            OperatorKind::Identity => x.to_vec(),
        }
    }

    /// Solves `(I - M)x = b` for the affine operator. `None` for other kinds
    /// or when `λ = 0` or `I - M` is singular.
    pub fn exact_fixed_point(&self) -> Option<Vector> {
        match &self.kind {
            OperatorKind::AffineAverage {
                matrix,
                offset,
                lambda,
            } if *lambda > 0.0 => {
                let lhs = DMatrix::<f64>::identity(self.dim, self.dim) - matrix;
                let rhs = DVector::from_column_slice(offset);
                lhs.lu()
                    .solve(&rhs)
                    .and_then(|s| Vector::new(s.iter().copied().collect()).ok())
            }
            _ => None,
        }
    }

    fn sample_domain_point(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        match self.kind {
            OperatorKind::SoftmaxPolicy { .. } => {
                let mut e: Vec<f64> = (0..self.dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = e.iter().sum();
                e.iter_mut().for_each(|v| *v /= s);
                e
            }
            _ => (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }
}

/// Largest observed ratio `‖T(x) - T(y)‖₂ / ‖x - y‖₂` over `trials` pairs
/// drawn uniformly from the operator's natural domain: the simplex for the
/// softmax map, the cube `[-1, 1]^d` otherwise.
pub fn nonexpansiveness_probe(op: &OperatorSpec, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0x70_726f_6265);
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let x = op.sample_domain_point(&mut rng);
        let y = op.sample_domain_point(&mut rng);
        let d = dist_l2(&x, &y);
        if d == 0.0 {
            continue;
        }
        let r = dist_l2(&op.apply_slice(&x), &op.apply_slice(&y)) / d;
        worst = worst.max(r);
    }
    worst
}

/// Deterministic Euclidean KM iteration `x ← ½x + ½T(x)` from the uniform
/// point until `‖x - T(x)‖₂ <= tol`.
pub fn fixed_point_oracle(op: &OperatorSpec, tol: f64, max_iter: usize) -> Result<FixedPointRef> {
    if !(tol > 0.0) {
        return Err(SkmError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = Vector::uniform(op.dim()).into_inner();
    let mut best: Option<FixedPointRef> = None;
    for it in 0..=max_iter {
        let tx = op.apply_slice(&x);
        let r = dist_l2(&x, &tx);
        if best.as_ref().is_none_or(|b| r < b.residual_norm) {
            best = Some(FixedPointRef {
                point: Vector::from_raw(x.clone()),
                residual_norm: r,
                iterations_used: it,
            });
        }
        if r <= tol {
            return Ok(best.expect("set above"));
        }
        if it == max_iter {
            break;
        }
        x.iter_mut().zip(&tx).for_each(|(a, b)| *a = 0.5 * *a + 0.5 * b);
    }
    Err(SkmError::NoConvergence {
        iterations: max_iter,
        best: Box::new(best.expect("at least one iterate")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let zero = OperatorSpec::softmax_policy(DMatrix::zeros(4, 4), 2.0).unwrap();
        let out = zero.apply(&v(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        assert!(out.iter().all(|c| (c - 0.25).abs() < 1e-16));

        let id = OperatorSpec::identity(2).unwrap();
        assert_eq!(id.apply(&v(&[0.3, 0.7])).unwrap().as_slice(), &[0.3, 0.7]);

        let diag = OperatorSpec::softmax_policy(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 1.0)
            .unwrap();
        let out = diag.apply(&v(&[1.0, 0.0])).unwrap();
        // e/(e+1) and 1/(e+1), 30-digit reference
        assert!((out[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((out[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn apply_checks_dimension() {
        let id = OperatorSpec::identity(3).unwrap();
        assert!(matches!(
            id.apply(&v(&[1.0, 2.0])),
            Err(SkmError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn softmax_output_on_simplex_for_wild_input() {
        let op = OperatorSpec::softmax_policy_seeded(6, 2.0, 3, MatrixScale::default()).unwrap();
        let out = op.apply(&v(&[1e6, -1e6, 3.0, 0.0, 5e5, -2.0])).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|c| *c >= 0.0 && c.is_finite()));
    }

    #[test]
    fn probe_examples() {
        let id = OperatorSpec::identity(5).unwrap();
        assert_eq!(nonexpansiveness_probe(&id, 100, 1), 1.0);
        let zero = OperatorSpec::softmax_policy(DMatrix::zeros(4, 4), 2.0).unwrap();
        assert_eq!(nonexpansiveness_probe(&zero, 100, 1), 0.0);
    }

    #[test]
    fn seeded_matrix_is_certified() {
        let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 11, MatrixScale::default()).unwrap();
        assert!(op.matrix_norm().unwrap() <= DEFAULT_MATRIX_NORM + 1e-12);
        assert!(op.probe_value().unwrap() <= 1.0 + 1e-9);

        // An oversized request gets shrunk until the probe passes.
        let big =
            OperatorSpec::softmax_policy_seeded(10, 2.0, 11, MatrixScale::SpectralNorm(50.0)).unwrap();
        assert!(big.probe_value().unwrap() <= 1.0 + 1e-9);
        assert!(big.matrix_norm().unwrap() < 50.0);
    }

    #[test]
    fn oracle_examples() {
        let id = OperatorSpec::identity(3).unwrap();
        let r = fixed_point_oracle(&id, 1e-12, 10).unwrap();
        assert_eq!(r.point, Vector::uniform(3));
        assert_eq!(r.residual_norm, 0.0);
        assert_eq!(r.iterations_used, 0);

        let zero = OperatorSpec::softmax_policy(DMatrix::zeros(4, 4), 2.0).unwrap();
        let r = fixed_point_oracle(&zero, 1e-12, 10).unwrap();
        assert_eq!(r.point, Vector::uniform(4));
        assert_eq!(r.residual_norm, 0.0);

        let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 7, MatrixScale::default()).unwrap();
        let r = fixed_point_oracle(&op, 1e-12, 10_000).unwrap();
        let check = dist_l2(&r.point, &op.apply(&r.point).unwrap());
        assert!(check <= 1e-12);
        assert_eq!(check, r.residual_norm);
        let again = fixed_point_oracle(&op, 1e-12, 10_000).unwrap();
        assert_eq!(again.residual_norm.to_bits(), r.residual_norm.to_bits());
    }

    #[test]
    fn oracle_reports_best_on_failure() {
        let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 7, MatrixScale::default()).unwrap();
        match fixed_point_oracle(&op, 1e-300, 3) {
            Err(SkmError::NoConvergence { iterations, best }) => {
                assert_eq!(iterations, 3);
                assert!(best.residual_norm > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn affine_fixed_point_matches_oracle() {
        let op = OperatorSpec::affine_seeded(6, 5, 0.9, 0.5).unwrap();
        let exact = op.exact_fixed_point().unwrap();
        let r = fixed_point_oracle(&op, 1e-12, 100_000).unwrap();
        assert!(crate::vector::dist_inf(&exact, &r.point) < 1e-10);
        let too_big = DMatrix::from_diagonal_element(2, 2, 1.5);
        assert!(OperatorSpec::affine_average(too_big, v(&[0.0, 0.0]), 0.5).is_err());
    }
}
