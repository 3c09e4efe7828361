//! Velocity fields `V(H, t)` for the flow prior.

mod fixtures;
mod gaussian;
mod network;

pub use fixtures::{decode_fixtures, encode_fixtures, load_fixtures, parity_max_abs_error, ParityFixture};
pub use gaussian::GaussianAnalyticField;
pub use network::{
    encode_weight_file, load_network, parse_network, sinusoidal_embedding, NetworkField, TensorEntry, WeightHeader,
    WEIGHT_MAGIC, WEIGHT_VERSION,
};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// A time-conditioned velocity field on `n_r x n_t` complex states.
///
/// Implementations must return a matrix of the input's shape and be pure:
/// repeated calls with the same arguments give bit-identical results.
pub trait VelocityField: Send + Sync {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix>;

    /// Closed-form spectral radius of the Jacobian of `h - t V(h, t)`, when
    /// the field admits one.
    fn analytic_denoiser_radius(&self, _t: f64) -> Option<f64> {
        None
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        (**self).eval(h, t)
    }

    fn analytic_denoiser_radius(&self, t: f64) -> Option<f64> {
        (**self).analytic_denoiser_radius(t)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for Box<F> {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        (**self).eval(h, t)
    }

    fn analytic_denoiser_radius(&self, t: f64) -> Option<f64> {
        (**self).analytic_denoiser_radius(t)
    }
}

/// `V = 0`; its denoiser is the identity.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroField;

impl VelocityField for ZeroField {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        check_time(t)?;
        Ok(ComplexMatrix::zeros(h.rows(), h.cols()))
    }

    fn analytic_denoiser_radius(&self, _t: f64) -> Option<f64> {
        Some(1.0)
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("flow time must lie in [0, 1], got {t}")));
    }
    Ok(())
}
