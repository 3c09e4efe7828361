//! Pilot matrices, the forward model `Y = H P + N`, and SNR conventions.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::Rng;
use crate::types::{ChannelMatrix, SystemDims};

/// `n_t x n_p` matrix of unit-modulus QPSK symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotMatrix(ComplexMatrix);

impl PilotMatrix {
    /// Wraps an arbitrary pilot matrix, checking that every entry is a QPSK
    /// point `exp(j (pi/4 + k pi/2))`.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        for z in matrix.as_slice() {
            let modulus_err = (z.norm() - 1.0).abs();
            let k = (z.arg() - FRAC_PI_4) / FRAC_PI_2;
            if modulus_err > 1e-12 || (k - k.round()).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("{z} is not a unit QPSK symbol")));
            }
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn n_t(&self) -> usize {
        self.0.rows()
    }

    pub fn n_p(&self) -> usize {
        self.0.cols()
    }
}

/// Draws a fixed QPSK pilot matrix with phases uniform over
/// `{pi/4, 3pi/4, 5pi/4, 7pi/4}`.
pub fn generate_pilots(dims: &SystemDims, rng: &mut Rng) -> Result<PilotMatrix> {
    dims.validate()?;
    let m = ComplexMatrix::from_fn(dims.n_t, dims.n_p, |_, _| {
        let k = rng.below(4) as f64;
        Complex64::from_polar(1.0, FRAC_PI_4 + k * FRAC_PI_2)
    });
    Ok(PilotMatrix(m))
}

/// Observed pilots with their per-entry complex noise standard deviation.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub y: ComplexMatrix,
    pub pilots: PilotMatrix,
    pub sigma_pilot: f64,
}

impl Measurement {
    pub fn new(y: ComplexMatrix, pilots: PilotMatrix, sigma_pilot: f64) -> Result<Self> {
        if y.cols() != pilots.n_p() {
            return Err(Error::Shape(format!(
                "observation has {} columns but there are {} pilots",
                y.cols(),
                pilots.n_p()
            )));
        }
        if !(sigma_pilot >= 0.0 && sigma_pilot.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {sigma_pilot}")));
        }
        Ok(Self { y, pilots, sigma_pilot })
    }

    pub fn dims(&self) -> SystemDims {
        SystemDims { n_r: self.y.rows(), n_t: self.pilots.n_t(), n_p: self.pilots.n_p() }
    }

    /// `||Y - H P||_F`.
    pub fn residual_norm(&self, h: &ComplexMatrix) -> Result<f64> {
        Ok(self.y.sub(&h.matmul(self.pilots.matrix())?)?.frobenius_norm())
    }
}

/// `Y = H P + N`, `N` i.i.d. `CN(0, sigma_pilot^2)`. No noise is drawn when
/// `sigma_pilot == 0`.
pub fn observe(h: &ChannelMatrix, pilots: &PilotMatrix, sigma_pilot: f64, rng: &mut Rng) -> Result<Measurement> {
    let h = h.matrix();
    if h.cols() != pilots.n_t() {
        return Err(Error::Shape(format!(
            "channel has {} transmit antennas, pilots have {}",
            h.cols(),
            pilots.n_t()
        )));
    }
    if !(sigma_pilot >= 0.0 && sigma_pilot.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {sigma_pilot}")));
    }
    let clean = h.matmul(pilots.matrix())?;
    let y = if sigma_pilot > 0.0 {
        let noise = rng.complex_gaussian(clean.rows(), clean.cols(), sigma_pilot * sigma_pilot)?;
        clean.add(&noise)?
    } else {
        clean
    };
    Measurement::new(y, pilots.clone(), sigma_pilot)
}

/// Where the SNR is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrConvention {
    /// Noise added directly to a unit-power channel: `sigma^2 = 10^(-snr/10)`.
    ChannelDomain,
    /// Noise on the received pilots. With unit-modulus pilots and unit-power
    /// channel entries each received entry carries power `n_t`, so
    /// `sigma_pilot^2 = n_t 10^(-snr/10)`.
    PilotDomain,
}

pub fn snr_to_sigma(snr_db: f64, convention: SnrConvention, dims: &SystemDims) -> f64 {
    let base = 10f64.powf(-snr_db / 10.0);
    match convention {
        SnrConvention::ChannelDomain => base.sqrt(),
        SnrConvention::PilotDomain => (dims.n_t as f64 * base).sqrt(),
    }
}
