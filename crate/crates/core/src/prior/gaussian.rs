use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianEvd};
use crate::prior::{check_time, VelocityField};

/// Exact marginal velocity for Gaussian channel rows under the linear path
/// `H_t = H_0 + t N`, `N ~ CN(0, sigma_fm^2 I)`.
///
/// Per row, `V(h, t) = E[N | H_t = h] = t sigma_fm^2 (h - m)(R + t^2 sigma_fm^2 I)^-1`,
/// so `h - t V(h, t)` is the Gaussian MMSE denoiser.
#[derive(Clone, Debug)]
pub struct GaussianAnalyticField {
    mean: ComplexMatrix,
    row_cov: ComplexMatrix,
    evd: HermitianEvd,
    sigma_fm: f64,
}

impl GaussianAnalyticField {
    pub fn new(mean: ComplexMatrix, row_cov: ComplexMatrix, sigma_fm: f64) -> Result<Self> {
        if !row_cov.is_square() || row_cov.cols() != mean.cols() {
            return Err(Error::Shape(format!(
                "row covariance {}x{} does not match mean {}x{}",
                row_cov.rows(),
                row_cov.cols(),
                mean.rows(),
                mean.cols()
            )));
        }
        if !(sigma_fm > 0.0 && sigma_fm.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_fm must be positive, got {sigma_fm}")));
        }
        let evd = row_cov.hermitian_evd()?;
        let scale = evd.values.first().copied().unwrap_or(0.0).abs().max(1.0);
        if evd.min_value() < -1e-12 * scale {
            return Err(Error::NotPsd { min_eig: evd.min_value() });
        }
        Ok(Self { mean, row_cov, evd, sigma_fm })
    }

    /// Zero-mean field with unit endpoint noise.
    pub fn zero_mean(n_r: usize, row_cov: ComplexMatrix) -> Result<Self> {
        let n_t = row_cov.cols();
        Self::new(ComplexMatrix::zeros(n_r, n_t), row_cov, 1.0)
    }

    pub fn mean(&self) -> &ComplexMatrix {
        &self.mean
    }

    pub fn row_cov(&self) -> &ComplexMatrix {
        &self.row_cov
    }

    pub fn sigma_fm(&self) -> f64 {
        self.sigma_fm
    }

    /// Spectral radius of the denoiser Jacobian `X -> X R (R + c I)^-1`,
    /// `c = t^2 sigma_fm^2`.
    pub fn denoiser_radius(&self, t: f64) -> f64 {
        let c = t * t * self.sigma_fm * self.sigma_fm;
        self.evd
            .values
            .iter()
            .map(|&l| {
                let l = l.max(0.0);
                if l + c == 0.0 {
                    1.0
                } else {
                    l / (l + c)
                }
            })
            .fold(0.0, f64::max)
    }
}

impl VelocityField for GaussianAnalyticField {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        check_time(t)?;
        if h.shape() != self.mean.shape() {
            return Err(Error::Shape(format!(
                "state is {}x{}, field expects {}x{}",
                h.rows(),
                h.cols(),
                self.mean.rows(),
                self.mean.cols()
            )));
        }
        if t == 0.0 {
            return Ok(ComplexMatrix::zeros(h.rows(), h.cols()));
        }
        let s2 = self.sigma_fm * self.sigma_fm;
        let c = t * t * s2;
        let gain = self.evd.spectral_map(|l| t * s2 / (l.max(0.0) + c));
        h.sub(&self.mean)?.matmul(&gain)
    }

    fn analytic_denoiser_radius(&self, t: f64) -> Option<f64> {
        Some(self.denoiser_radius(t))
    }
}
