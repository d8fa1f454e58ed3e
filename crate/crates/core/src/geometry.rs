//! Legendre distance-generating functions and their Bregman distances.
//!
//! Each [`LegendreGeometry`] supplies the value `θ(x)`, the mirror map
//! `∇θ`, its inverse `∇θ*`, and the constants `(c, q)` of a uniform-convexity
//! lower bound `δ(r) >= c·r^q`. Normalizations:
//!
//! | kind                  | `θ(x)`              | `∇θ(x)`              | `∇θ*(u)`                 | `(c, q)`       |
//! |-----------------------|---------------------|----------------------|--------------------------|----------------|
//! | `euclidean`           | `½‖x‖²`             | `x`                  | `u`                      | `(1/2, 2)`     |
//! | `neg_entropy_simplex` | `Σ xᵢ ln xᵢ`        | `1 + ln xᵢ`          | `softmax(u)`             | `(1/8, 2)`     |
//! | `p_norm(p)`           | `(1/p) Σ |xᵢ|^p`    | `sign(xᵢ)|xᵢ|^(p-1)` | `sign(uᵢ)|uᵢ|^(1/(p-1))` | `((p-1)/8, 2)` |
//! | `scaled(κ, base)`     | `κ·θ_base(x)`       | `κ·∇θ_base(x)`       | `∇θ*_base(u/κ)`          | `(κ·c, q)`     |
//!
//! The negative entropy is restricted to the probability simplex, so its
//! conjugate gradient is the softmax rather than `exp(u - 1)`. The entropy
//! modulus constant is stated for the ℓ1 norm and remains valid for ℓ2
//! because `‖·‖₂ <= ‖·‖₁`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SkmError};
use crate::vector::{check_dims, dot, DualVector, Vector};

/// Default interior safeguard for the simplex geometry.
pub const DEFAULT_DOMAIN_FLOOR: f64 = 1e-12;

/// Tolerance on `|Σ xᵢ - 1|` for points accepted as lying on the simplex.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind {
    Euclidean,
    NegEntropySimplex,
    PNorm { p: f64 },
    Scaled {
        factor: f64,
        base: Box<LegendreGeometry>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegendreGeometry {
    kind: GeometryKind,
    modulus_c: f64,
    modulus_q: f64,
    domain_floor: f64,
}

impl LegendreGeometry {
    pub fn euclidean() -> Self {
        Self {
            kind: GeometryKind::Euclidean,
            modulus_c: 0.5,
            modulus_q: 2.0,
            domain_floor: DEFAULT_DOMAIN_FLOOR,
        }
    }

    pub fn neg_entropy_simplex() -> Self {
        Self {
            kind: GeometryKind::NegEntropySimplex,
            modulus_c: 0.125,
            modulus_q: 2.0,
            domain_floor: DEFAULT_DOMAIN_FLOOR,
        }
    }

    /// `θ(x) = (1/p)‖x‖_p^p` for `p ∈ (1, 2]`, with the local modulus
    /// `δ(r) = (p-1)/8 · r²`.
    pub fn p_norm(p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(SkmError::Config(format!("p_norm requires p in (1, 2], got {p}")));
        }
        Ok(Self {
            kind: GeometryKind::PNorm { p },
            modulus_c: (p - 1.0) / 8.0,
            modulus_q: 2.0,
            domain_floor: DEFAULT_DOMAIN_FLOOR,
        })
    }

    /// `κ·θ_base`. Shares the base domain and exponent `q`; `c` scales by `κ`.
    pub fn scaled(factor: f64, base: LegendreGeometry) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(SkmError::Config(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Self {
            modulus_c: factor * base.modulus_c,
            modulus_q: base.modulus_q,
            domain_floor: base.domain_floor,
            kind: GeometryKind::Scaled {
                factor,
                base: Box::new(base),
            },
        })
    }

    /// Overrides the modulus constants. Requires `c > 0` and `q >= 2`.
    pub fn with_modulus(mut self, c: f64, q: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(q >= 2.0 && q.is_finite()) {
            return Err(SkmError::Config(format!(
                "modulus requires c > 0 and q >= 2, got c={c}, q={q}"
            )));
        }
        self.modulus_c = c;
        self.modulus_q = q;
        Ok(self)
    }

    pub fn with_domain_floor(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1e-3) {
            return Err(SkmError::Config(format!(
                "domain floor must lie in (0, 1e-3), got {eps}"
            )));
        }
        self.domain_floor = eps;
        if let GeometryKind::Scaled { base, .. } = &mut self.kind {
            **base = (**base).clone().with_domain_floor(eps)?;
        }
        Ok(self)
    }

    pub fn kind(&self) -> &GeometryKind {
        &self.kind
    }

    pub fn modulus_c(&self) -> f64 {
        self.modulus_c
    }

    pub fn modulus_q(&self) -> f64 {
        self.modulus_q
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    /// The innermost non-scaled geometry.
    pub fn root(&self) -> &LegendreGeometry {
        match &self.kind {
            GeometryKind::Scaled { base, .. } => base.root(),
            _ => self,
        }
    }

    /// Product of all scale factors between `self` and [`root`](Self::root).
    pub fn total_factor(&self) -> f64 {
        match &self.kind {
            GeometryKind::Scaled { factor, base } => factor * base.total_factor(),
            _ => 1.0,
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self.root().kind, GeometryKind::NegEntropySimplex)
    }

    /// Checks that `x` lies in the interior of `dom θ`.
    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if let Some(i) = x.iter().position(|c| !c.is_finite()) {
            return Err(SkmError::Domain(format!("coordinate {i} is not finite")));
        }
        if self.is_simplex() {
            let eps = self.domain_floor;
            if let Some(i) = x.iter().position(|&c| c < eps) {
                return Err(SkmError::Domain(format!(
                    "simplex coordinate {i} = {:e} is below the floor {eps:e}",
                    x[i]
                )));
            }
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(SkmError::Domain(format!(
                    "simplex coordinates sum to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// `θ(x)`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GeometryKind::Euclidean => 0.5 * dot(x, x),
            GeometryKind::NegEntropySimplex => x
                .iter()
                .map(|&v| if v == 0.0 { 0.0 } else { v * v.ln() })
                .sum(),
            GeometryKind::PNorm { p } => x.iter().map(|v| v.abs().powf(*p)).sum::<f64>() / p,
            GeometryKind::Scaled { factor, base } => factor * base.value_unchecked(x),
        }
    }

    /// `∇θ(x)`.
    pub fn grad(&self, x: &Vector) -> Result<DualVector> {
        self.check_domain(x)?;
        Ok(DualVector::from_raw(self.grad_unchecked(x)))
    }

    fn grad_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            GeometryKind::Euclidean => x.to_vec(),
            GeometryKind::NegEntropySimplex => x.iter().map(|v| 1.0 + v.ln()).collect(),
            GeometryKind::PNorm { p } => x
                .iter()
                .map(|&v| v.signum() * v.abs().powf(p - 1.0))
                .collect(),
            GeometryKind::Scaled { factor, base } => {
                let mut g = base.grad_unchecked(x);
                g.iter_mut().for_each(|c| *c *= factor);
                g
            }
        }
    }

    /// `∇θ*(u)`, the inverse mirror map. The simplex case is a max-shifted
    /// softmax and is finite for every finite input.
    pub fn grad_conjugate(&self, u: &DualVector) -> Result<Vector> {
        let out = self.grad_conjugate_raw(u)?;
        if let Some(i) = out.iter().position(|c| !c.is_finite()) {
            return Err(SkmError::Domain(format!(
                "conjugate gradient overflowed at coordinate {i}"
            )));
        }
        Ok(Vector::from_raw(out))
    }

    fn grad_conjugate_raw(&self, u: &[f64]) -> Result<Vec<f64>> {
        if let Some(i) = u.iter().position(|c| !c.is_finite()) {
            return Err(SkmError::Domain(format!("dual coordinate {i} is not finite")));
        }
        Ok(match &self.kind {
            GeometryKind::Euclidean => u.to_vec(),
            GeometryKind::NegEntropySimplex => softmax(u),
            GeometryKind::PNorm { p } => {
                let e = 1.0 / (p - 1.0);
                u.iter().map(|&v| v.signum() * v.abs().powf(e)).collect()
            }
            GeometryKind::Scaled { factor, base } => {
                let shrunk: Vec<f64> = u.iter().map(|c| c / factor).collect();
                base.grad_conjugate_raw(&shrunk)?
            }
        })
    }

    /// `D_θ(x, y) = θ(x) - θ(y) - ⟨∇θ(y), x - y⟩`, evaluated from the
    /// definition. Rounding residue below zero is clipped.
    pub fn bregman(&self, x: &Vector, y: &Vector) -> Result<f64> {
        check_dims(x.dim(), y.dim())?;
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(self.bregman_unchecked(x, y))
    }

    pub(crate) fn bregman_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let gy = self.grad_unchecked(y);
        let inner: f64 = gy
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        (self.value_unchecked(x) - self.value_unchecked(y) - inner).max(0.0)
    }

    /// Absolute defect of the three-point identity
    /// `D(x,z) = D(x,y) + D(y,z) + ⟨∇θ(y) - ∇θ(z), x - y⟩`.
    pub fn three_point_defect(&self, x: &Vector, y: &Vector, z: &Vector) -> Result<f64> {
        check_dims(x.dim(), y.dim())?;
        check_dims(x.dim(), z.dim())?;
        for p in [x, y, z] {
            self.check_domain(p)?;
        }
        let raw = |a: &[f64], b: &[f64]| {
            let gb = self.grad_unchecked(b);
            self.value_unchecked(a)
                - self.value_unchecked(b)
                - gb.iter()
                    .zip(a.iter().zip(b))
                    .map(|(g, (s, t))| g * (s - t))
                    .sum::<f64>()
        };
        let gy = self.grad_unchecked(y);
        let gz = self.grad_unchecked(z);
        let cross: f64 = gy
            .iter()
            .zip(&gz)
            .zip(x.iter().zip(y.iter()))
            .map(|((a, b), (s, t))| (a - b) * (s - t))
            .sum();
        Ok((raw(x, z) - raw(x, y) - raw(y, z) - cross).abs())
    }

    /// `c·r^q`.
    pub fn modulus_lower_bound(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        self.modulus_c * r.powf(self.modulus_q)
    }

    /// `p = (q - 1)/q`.
    pub fn rate_exponent(&self) -> f64 {
        (self.modulus_q - 1.0) / self.modulus_q
    }

    /// Local Lipschitz constant of `∇θ` around `x`: 1 for the Euclidean
    /// case, `1/min xᵢ` on the simplex, `(p-1)·min|xᵢ|^(p-2)` for `p_norm`.
    /// Coordinates are floored at the domain floor.
    pub fn gradient_lipschitz_at(&self, x: &[f64]) -> f64 {
        let eps = self.domain_floor;
        match &self.kind {
            GeometryKind::Euclidean => 1.0,
            GeometryKind::NegEntropySimplex => {
                1.0 / x.iter().fold(f64::INFINITY, |m, &v| m.min(v)).max(eps)
            }
            GeometryKind::PNorm { p } => {
                let m = x.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs())).max(eps);
                (p - 1.0) * m.powf(p - 2.0)
            }
            GeometryKind::Scaled { factor, base } => factor * base.gradient_lipschitz_at(x),
        }
    }

    /// Moves `x` into the interior of the domain. On the simplex every
    /// coordinate below the floor is raised to it and the vector is
    /// renormalized; other geometries are unrestricted. Returns the number of
    /// clamped coordinates.
    pub fn safeguard(&self, x: &mut [f64]) -> usize {
        if !self.is_simplex() {
            return 0;
        }
        let eps = self.domain_floor;
        let mut clamped = 0;
        for v in x.iter_mut() {
            if !(*v >= eps) {
                *v = eps;
                clamped += 1;
            }
        }
        let sum: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v = (*v / sum).max(eps));
        clamped
    }

    /// Short identifier used in metadata and tables.
    pub fn name(&self) -> String {
        match &self.kind {
            GeometryKind::Euclidean => "euclidean".into(),
            GeometryKind::NegEntropySimplex => "neg_entropy_simplex".into(),
            GeometryKind::PNorm { p } => format!("p_norm({p})"),
            GeometryKind::Scaled { factor, base } => format!("scaled({factor}, {})", base.name()),
        }
    }
}

/// Max-shifted softmax.
pub(crate) fn softmax(u: &[f64]) -> Vec<f64> {
    let m = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// The map `n ↦ κ_n` of an adaptive geometry.
#[derive(Clone)]
pub enum ScaleFn {
    Constant(f64),
    /// `κ_n = 1 + amplitude/(n + 1)`.
    Harmonic { amplitude: f64 },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl ScaleFn {
    pub fn eval(&self, n: usize) -> f64 {
        match self {
            ScaleFn::Constant(k) => *k,
            ScaleFn::Harmonic { amplitude } => 1.0 + amplitude / (n as f64 + 1.0),
            ScaleFn::Custom(f) => f(n),
        }
    }
}

impl fmt::Debug for ScaleFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleFn::Constant(k) => f.debug_tuple("Constant").field(k).finish(),
            ScaleFn::Harmonic { amplitude } => f
                .debug_struct("Harmonic")
                .field("amplitude", amplitude)
                .finish(),
            ScaleFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A sequence of geometries `θ_n = κ_n·θ` with `κ_n` clamped into
/// `[κ_lower, κ_upper]`.
///
/// Scaling a generating function by a positive constant leaves the noiseless
/// update `∇θ_n*((1-α)∇θ_n(x) + α∇θ_n(y))` unchanged. A perturbation added in
/// the dual space is divided by `κ_n`.
#[derive(Debug, Clone)]
pub struct GeometrySchedule {
    base: LegendreGeometry,
    scale_fn: ScaleFn,
    kappa_lower: f64,
    kappa_upper: f64,
}

impl GeometrySchedule {
    pub fn new(
        base: LegendreGeometry,
        scale_fn: ScaleFn,
        kappa_lower: f64,
        kappa_upper: f64,
    ) -> Result<Self> {
        if !(kappa_lower > 0.0 && kappa_lower <= kappa_upper && kappa_upper.is_finite()) {
            return Err(SkmError::Config(format!(
                "scale bounds require 0 < lower <= upper < inf, got [{kappa_lower}, {kappa_upper}]"
            )));
        }
        Ok(Self {
            base,
            scale_fn,
            kappa_lower,
            kappa_upper,
        })
    }

    /// `κ_n = 1 + 1/(n+1)` on `[1, 2]`.
    pub fn harmonic(base: LegendreGeometry) -> Self {
        Self {
            base,
            scale_fn: ScaleFn::Harmonic { amplitude: 1.0 },
            kappa_lower: 1.0,
            kappa_upper: 2.0,
        }
    }

    pub fn base(&self) -> &LegendreGeometry {
        &self.base
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.kappa_lower, self.kappa_upper)
    }

    pub fn scale_at(&self, n: usize) -> Result<f64> {
        let k = self.scale_fn.eval(n);
        if !k.is_finite() {
            return Err(SkmError::Config(format!("scale function returned {k} at n={n}")));
        }
        Ok(k.clamp(self.kappa_lower, self.kappa_upper))
    }

    pub fn geometry_at(&self, n: usize) -> Result<LegendreGeometry> {
        LegendreGeometry::scaled(self.scale_at(n)?, self.base.clone())
    }
}
