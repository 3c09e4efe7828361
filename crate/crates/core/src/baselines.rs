//! Classical reference estimators.

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurement::{Measurement, PilotMatrix};
use crate::types::ChannelMatrix;

/// Condition number above which [`LmmseContext::ill_conditioned`] reports.
pub const COND_WARN: f64 = 1e12;

/// Linear MMSE filter for rows distributed `CN(0, r_h)`, with `r_h = E[h^H h]`.
#[derive(Clone, Debug)]
pub struct LmmseContext {
    pub r_h: ComplexMatrix,
    /// `(P^H r_h P + sigma^2 I)^-1 P^H r_h`.
    pub factor: ComplexMatrix,
    /// Eigenvalue ratio of the inner matrix.
    pub condition: f64,
}

impl LmmseContext {
    pub fn new(pilots: &PilotMatrix, sigma_pilot: f64, r_h: ComplexMatrix) -> Result<Self> {
        let p = pilots.matrix();
        if r_h.shape() != (p.rows(), p.rows()) {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, pilots imply {}x{}",
                r_h.rows(),
                r_h.cols(),
                p.rows(),
                p.rows()
            )));
        }
        let evd = r_h.hermitian_evd()?;
        let scale = evd.values.first().copied().unwrap_or(0.0).abs().max(1.0);
        if evd.min_value() < -1e-10 * scale {
            return Err(Error::NotPsd { min_eig: evd.min_value() });
        }
        let ph = p.conj_transpose();
        let ph_r = ph.matmul(&r_h)?;
        let inner = ph_r
            .matmul(p)?
            .add(&ComplexMatrix::identity(p.cols()).scale(sigma_pilot * sigma_pilot))?;
        let inner_evd = inner.hermitian_evd()?;
        let (hi, lo) = (inner_evd.values[0], inner_evd.min_value());
        if !(lo > 0.0) {
            return Err(Error::Singular);
        }
        let factor = inner.solve(&ph_r)?;
        Ok(Self { r_h, factor, condition: hi / lo })
    }

    pub fn ill_conditioned(&self) -> bool {
        self.condition > COND_WARN
    }

    pub fn estimate(&self, y: &ComplexMatrix) -> Result<ChannelMatrix> {
        Ok(ChannelMatrix::new(y.matmul(&self.factor)?))
    }
}

/// `Y (P^H R_H P + sigma^2 I)^-1 P^H R_H`.
pub fn lmmse(meas: &Measurement, r_h: &ComplexMatrix) -> Result<ChannelMatrix> {
    LmmseContext::new(&meas.pilots, meas.sigma_pilot, r_h.clone())?.estimate(&meas.y)
}

/// Moore-Penrose pseudo-inverse of a matrix, via the eigendecomposition of
/// its Gram matrix `A^H A`.
pub fn pseudo_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let ah = a.conj_transpose();
    let gram = ah.matmul(a)?;
    let evd = gram.hermitian_evd()?;
    let top = evd.values.first().copied().unwrap_or(0.0);
    let cutoff = top * gram.rows().max(1) as f64 * f64::EPSILON * 16.0;
    let inv = evd.spectral_map(|l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 });
    inv.matmul(&ah)
}

/// Minimum-norm minimizer of `||Y - H P||_F`, `H = Y P^+`.
pub fn least_squares(meas: &Measurement) -> Result<ChannelMatrix> {
    Ok(ChannelMatrix::new(meas.y.matmul(&pseudo_inverse(meas.pilots.matrix())?)?))
}
