use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Antenna and pilot counts of a narrowband MIMO link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub n_r: usize,
    pub n_t: usize,
    pub n_p: usize,
}

impl SystemDims {
    pub fn new(n_r: usize, n_t: usize, n_p: usize) -> Result<Self> {
        let dims = Self { n_r, n_t, n_p };
        dims.validate()?;
        Ok(dims)
    }

    /// Pilot count for a target density `alpha = n_p / n_t`, rounded to the
    /// nearest integer and at least one.
    pub fn with_pilot_density(n_r: usize, n_t: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("pilot density must be positive, got {alpha}")));
        }
        let n_p = ((alpha * n_t as f64).round() as usize).max(1);
        Self::new(n_r, n_t, n_p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_t == 0 || self.n_p == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got n_r={}, n_t={}, n_p={}",
                self.n_r, self.n_t, self.n_p
            )));
        }
        Ok(())
    }

    pub fn pilot_density(&self) -> f64 {
        self.n_p as f64 / self.n_t as f64
    }
}

/// An `n_r x n_t` channel realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix(ComplexMatrix);

impl ChannelMatrix {
    pub fn new(matrix: ComplexMatrix) -> Self {
        Self(matrix)
    }

    pub fn with_dims(matrix: ComplexMatrix, dims: &SystemDims) -> Result<Self> {
        if matrix.shape() != (dims.n_r, dims.n_t) {
            return Err(Error::Shape(format!(
                "channel is {}x{}, system expects {}x{}",
                matrix.rows(),
                matrix.cols(),
                dims.n_r,
                dims.n_t
            )));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

impl AsRef<ComplexMatrix> for ChannelMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl From<ComplexMatrix> for ChannelMatrix {
    fn from(m: ComplexMatrix) -> Self {
        Self(m)
    }
}
