//! Recursive flow (RC-Flow) estimation for under-determined linear inverse
//! problems `Y = H P + N`.
//!
//! The solver alternates a flow-matching denoiser, a closed-form proximal
//! projection onto the pilot observations, and anchored re-interpolation,
//! restarting the anchor from its own output on every outer pass.

// Negated comparisons are how NaN arguments get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod channelgen;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod prior;
pub mod rng;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, HermitianEvd};
pub use measurement::{Measurement, PilotMatrix, SnrConvention};
pub use prior::{GaussianAnalyticField, NetworkField, VelocityField};
pub use rng::Rng;
pub use solver::{Estimate, InnerSteps, ProjectionContext, SolverConfig, SolverTrace};
pub use types::{ChannelMatrix, SystemDims};

pub use num_complex::Complex64;
