//! Finite, non-empty coordinate vectors for the primal space and its dual.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SkmError};

fn check_coords(coords: &[f64], what: &str) -> Result<()> {
    if coords.is_empty() {
        return Err(SkmError::Domain(format!("{what} must have dimension >= 1")));
    }
    if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
        return Err(SkmError::Domain(format!(
            "{what} coordinate {i} is not finite ({})",
            coords[i]
        )));
    }
    Ok(())
}

macro_rules! coord_vector {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(coords: Vec<f64>) -> Result<Self> {
                check_coords(&coords, $what)?;
                Ok(Self(coords))
            }

            pub fn zeros(dim: usize) -> Self {
                assert!(dim >= 1, "dimension must be >= 1");
                Self(vec![0.0; dim])
            }

            /// Wraps coordinates produced by internal arithmetic. Finiteness is
            /// checked in debug builds only.
            pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
                debug_assert!(!coords.is_empty());
                Self(coords)
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|c| c.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = SkmError;

            fn try_from(coords: Vec<f64>) -> Result<Self> {
                Self::new(coords)
            }
        }

        impl From<$name> for Vec<f64> {
            fn from(v: $name) -> Vec<f64> {
                v.0
            }
        }
    };
}

coord_vector!(
    /// A point of the primal space.
    Vector,
    "vector"
);
coord_vector!(
    /// An element of the dual space: gradients of the generating function and
    /// dual-space perturbations.
    DualVector,
    "dual vector"
);

impl Vector {
    /// The barycentre `(1/d, ..., 1/d)` of the probability simplex.
    pub fn uniform(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be >= 1");
        Self(vec![1.0 / dim as f64; dim])
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SkmError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_l1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dist_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
