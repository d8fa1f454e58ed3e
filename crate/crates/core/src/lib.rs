//! Stochastic Bregman–Krasnoselskii–Mann iteration.
//!
//! The crate is organised around one loop: pick a Legendre
//! [`geometry`](geometry::LegendreGeometry), a nonexpansive
//! [`operator`](operators::OperatorSpec), a step schedule and a
//! [`noise model`](noise::NoiseModel), then call [`iteration::run`] and feed
//! the resulting [`Trace`](iteration::Trace) to the [`analysis`] functions.
//!
//! ```
//! use bregman_skm::prelude::*;
//!
//! let op = OperatorSpec::softmax_policy_seeded(5, 2.0, 1, MatrixScale::Auto).unwrap();
//! let cfg = IterationConfig::new(op, LegendreGeometry::neg_entropy_simplex())
//!     .noise(NoiseModel::gaussian(0.1).unwrap())
//!     .n_iters(500);
//! let trace = run(&cfg, None).unwrap();
//! assert_eq!(trace.rows.len(), 500);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checks;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod iteration;
pub mod noise;
pub mod operators;
pub mod vector;

pub use error::{Result, SkmError};

pub mod prelude {
    pub use crate::analysis::{
        averaged_residual, bound_envelope_check, descent_check, fit_rate, step_sum, DescentCheckReport,
        RateFit,
    };
    pub use crate::error::{Result, SkmError};
    pub use crate::geometry::{GeometrySchedule, LegendreGeometry, ScaleFn};
    pub use crate::iteration::{
        run, skm_step, skm_step_with, GeometrySpec, Init, IterationConfig, NoisePlacement, StepSchedule, Trace,
        TraceRow,
    };
    pub use crate::noise::{trim, trim_level, NoiseModel, TrimSchedule};
    pub use crate::operators::{fixed_point_oracle, nonexpansiveness_probe, FixedPointRef, MatrixScale, OperatorSpec};
    pub use crate::vector::{DualVector, Vector};
}
