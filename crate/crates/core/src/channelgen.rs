//! Synthetic channel ensembles and their on-disk format.
//!
//! Dataset files are a 16-byte magic (`RCFLOWDS`, seven zero bytes, version
//! byte), a little-endian `u32` header length, a UTF-8 JSON header, then
//! `count * n_r * n_t` complex entries as interleaved little-endian `f64`
//! pairs, sample-major and row-major within a sample.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::Rng;
use crate::types::{ChannelMatrix, SystemDims};

pub const DATASET_MAGIC: [u8; 16] = *b"RCFLOWDS\0\0\0\0\0\0\0\x01";
const DATASET_VERSION: u8 = 1;

/// Rows i.i.d. `CN(mean_row, row_cov)` with `row_cov = E[h^H h]` on the
/// transmit side.
#[derive(Clone, Debug)]
pub struct GaussianChannelModel {
    pub dims: SystemDims,
    pub row_cov: ComplexMatrix,
    pub mean: ComplexMatrix,
    /// Square root `A` with `A^H A = row_cov`, from the eigendecomposition so
    /// rank-deficient covariances are allowed.
    sqrt_cov: ComplexMatrix,
}

impl GaussianChannelModel {
    pub fn new(dims: SystemDims, row_cov: ComplexMatrix, mean: Option<ComplexMatrix>) -> Result<Self> {
        dims.validate()?;
        if row_cov.shape() != (dims.n_t, dims.n_t) {
            return Err(Error::Shape(format!(
                "row covariance is {}x{}, expected {}x{}",
                row_cov.rows(),
                row_cov.cols(),
                dims.n_t,
                dims.n_t
            )));
        }
        let evd = row_cov.hermitian_evd()?;
        let scale = evd.values.first().copied().unwrap_or(0.0).abs().max(1.0);
        if evd.min_value() < -1e-12 * scale {
            return Err(Error::NotPsd { min_eig: evd.min_value() });
        }
        let mean = match mean {
            Some(m) if m.shape() != (dims.n_r, dims.n_t) => {
                return Err(Error::Shape("mean does not match channel dimensions".into()))
            }
            Some(m) => m,
            None => ComplexMatrix::zeros(dims.n_r, dims.n_t),
        };
        // A = diag(sqrt(lambda)) U^H.
        let sqrt_vals: Vec<f64> = evd.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
        let sqrt_cov = evd.vectors.scale_columns(&sqrt_vals)?.conj_transpose();
        Ok(Self { dims, row_cov, mean, sqrt_cov })
    }

    /// Uncorrelated unit-power entries.
    pub fn iid(dims: SystemDims) -> Result<Self> {
        Self::new(dims, ComplexMatrix::identity(dims.n_t), None)
    }

    /// Exponential correlation `R_ab = rho^|a-b|`, unit trace per antenna.
    pub fn exponential(dims: SystemDims, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("correlation must be in [0, 1), got {rho}")));
        }
        let r = ComplexMatrix::from_fn(dims.n_t, dims.n_t, |a, b| {
            Complex64::new(rho.powi((a as i64 - b as i64).unsigned_abs() as i32), 0.0)
        });
        Self::new(dims, r, None)
    }

    pub fn sample(&self, rng: &mut Rng) -> ChannelMatrix {
        let z = ComplexMatrix::from_fn(self.dims.n_r, self.dims.n_t, |_, _| rng.complex_normal(1.0));
        let h = z
            .matmul(&self.sqrt_cov)
            .and_then(|h| h.add(&self.mean))
            .expect("shapes fixed at construction");
        ChannelMatrix::new(h)
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Gaussian {
            row_cov: self.row_cov.clone(),
            mean_is_zero: self.mean.max_abs() == 0.0,
        }
    }
}

/// Geometric narrowband model with `n_paths` plane waves between two
/// half-wavelength uniform linear arrays.
#[derive(Clone, Debug)]
pub struct ClusteredChannelModel {
    pub dims: SystemDims,
    pub n_paths: usize,
    /// Half-width of the uniform angle distribution, radians.
    pub angle_spread: f64,
}

impl ClusteredChannelModel {
    pub fn new(dims: SystemDims, n_paths: usize) -> Result<Self> {
        dims.validate()?;
        if n_paths == 0 {
            return Err(Error::InvalidArgument("at least one path is required".into()));
        }
        Ok(Self { dims, n_paths, angle_spread: PI / 2.0 })
    }

    fn steering(n: usize, angle: f64) -> Vec<Complex64> {
        let norm = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|k| Complex64::from_polar(norm, PI * k as f64 * angle.sin()))
            .collect()
    }

    /// One unnormalized realization `sqrt(n_t n_r / L) sum_l g_l a_r a_t^H`.
    pub fn sample_raw(&self, rng: &mut Rng) -> ComplexMatrix {
        let (n_r, n_t) = (self.dims.n_r, self.dims.n_t);
        let gain = ((n_r * n_t) as f64 / self.n_paths as f64).sqrt();
        let mut acc = vec![Complex64::new(0.0, 0.0); n_r * n_t];
        for _ in 0..self.n_paths {
            let g = rng.complex_normal(1.0) * gain;
            let aoa = (2.0 * rng.uniform() - 1.0) * self.angle_spread;
            let aod = (2.0 * rng.uniform() - 1.0) * self.angle_spread;
            let a_r = Self::steering(n_r, aoa);
            let a_t = Self::steering(n_t, aod);
            for i in 0..n_r {
                for j in 0..n_t {
                    acc[i * n_t + j] += g * a_r[i] * a_t[j].conj();
                }
            }
        }
        ComplexMatrix::from_vec_unchecked(n_r, n_t, acc)
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor::Clustered { n_paths: self.n_paths, angle_spread: self.angle_spread }
    }
}

/// What generated a dataset, stored in the file header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDescriptor {
    Gaussian { row_cov: ComplexMatrix, mean_is_zero: bool },
    Clustered { n_paths: usize, angle_spread: f64 },
    External { note: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dims: SystemDims,
    pub model: ModelDescriptor,
    pub samples: Vec<ChannelMatrix>,
    pub normalized: bool,
}

impl Dataset {
    /// Mean `|h_ij|^2` over every entry of every sample.
    pub fn mean_power(&self) -> f64 {
        let entries = self.samples.len() * self.dims.n_r * self.dims.n_t;
        if entries == 0 {
            return 0.0;
        }
        self.samples.iter().map(|h| h.matrix().frobenius_norm_sq()).sum::<f64>() / entries as f64
    }

    /// Sample transmit-side covariance `(1 / (count n_r)) sum h_i^H h_i` over
    /// all rows of all samples.
    pub fn empirical_row_cov(&self) -> ComplexMatrix {
        let n_t = self.dims.n_t;
        let mut acc = vec![Complex64::new(0.0, 0.0); n_t * n_t];
        let mut rows = 0usize;
        for h in &self.samples {
            let m = h.matrix();
            for i in 0..m.rows() {
                let r = m.row(i);
                for a in 0..n_t {
                    let ca = r[a].conj();
                    for b in 0..n_t {
                        acc[a * n_t + b] += ca * r[b];
                    }
                }
                rows += 1;
            }
        }
        let scale = 1.0 / rows.max(1) as f64;
        ComplexMatrix::from_vec_unchecked(n_t, n_t, acc.into_iter().map(|z| z * scale).collect())
    }
}

/// Draws `n` independent samples; sample `k` uses stream `k` of `rng`'s seed.
pub fn sample_gaussian(model: &GaussianChannelModel, n: usize, rng: &Rng) -> Dataset {
    let samples = (0..n).map(|k| model.sample(&mut rng.fork(k as u64))).collect();
    Dataset { dims: model.dims, model: model.descriptor(), samples, normalized: false }
}

/// Draws `n` clustered samples and rescales the whole set to unit mean entry
/// power.
pub fn sample_clustered(model: &ClusteredChannelModel, n: usize, rng: &Rng) -> Dataset {
    let raw: Vec<ComplexMatrix> = (0..n).map(|k| model.sample_raw(&mut rng.fork(k as u64))).collect();
    let mut ds = Dataset {
        dims: model.dims,
        model: model.descriptor(),
        samples: raw.into_iter().map(ChannelMatrix::new).collect(),
        normalized: false,
    };
    normalize(&mut ds);
    ds
}

/// Global rescaling so the mean entry power is one.
pub fn normalize(ds: &mut Dataset) {
    let p = ds.mean_power();
    if p > 0.0 {
        let s = 1.0 / p.sqrt();
        for h in &mut ds.samples {
            *h = ChannelMatrix::new(h.matrix().scale(s));
        }
    }
    ds.normalized = true;
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    dims: SystemDims,
    model: ModelDescriptor,
    count: usize,
    normalized: bool,
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&DatasetHeader {
        dims: ds.dims,
        model: ds.model.clone(),
        count: ds.samples.len(),
        normalized: ds.normalized,
    })
    .map_err(|e| Error::Header(e.to_string()))?;
    let entries = ds.samples.len() * ds.dims.n_r * ds.dims.n_t;
    let mut out = Vec::with_capacity(16 + 4 + header.len() + entries * 16);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for h in &ds.samples {
        if h.matrix().shape() != (ds.dims.n_r, ds.dims.n_t) {
            return Err(Error::Shape("sample does not match dataset dimensions".into()));
        }
        for z in h.matrix().as_slice() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 16 {
        return Err(Error::Truncated("dataset magic".into()));
    }
    if bytes[..15] != DATASET_MAGIC[..15] {
        return Err(Error::BadMagic("dataset file"));
    }
    if bytes[15] != DATASET_VERSION {
        return Err(Error::VersionMismatch { found: bytes[15], expected: DATASET_VERSION });
    }
    let len_bytes: [u8; 4] = bytes
        .get(16..20)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::Truncated("dataset header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let header_bytes = bytes
        .get(20..20 + header_len)
        .ok_or_else(|| Error::Truncated("dataset header".into()))?;
    let header: DatasetHeader =
        serde_json::from_slice(header_bytes).map_err(|e| Error::Header(e.to_string()))?;
    header.dims.validate()?;
    let per_sample = header.dims.n_r * header.dims.n_t;
    let body = &bytes[20 + header_len..];
    let expected = header.count * per_sample * 16;
    if body.len() < expected {
        return Err(Error::Truncated(format!(
            "dataset body has {} bytes, header promises {expected}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::Header(format!("{} trailing bytes after samples", body.len() - expected)));
    }
    let read_f64 = |off: usize| f64::from_le_bytes(body[off..off + 8].try_into().expect("8 bytes"));
    let mut samples = Vec::with_capacity(header.count);
    for s in 0..header.count {
        let base = s * per_sample * 16;
        let data = (0..per_sample)
            .map(|k| Complex64::new(read_f64(base + 16 * k), read_f64(base + 16 * k + 8)))
            .collect();
        samples.push(ChannelMatrix::new(ComplexMatrix::new(header.dims.n_r, header.dims.n_t, data)?));
    }
    Ok(Dataset { dims: header.dims, model: header.model, samples, normalized: header.normalized })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> SystemDims {
        SystemDims::new(4, 16, 10).unwrap()
    }

    #[test]
    fn identity_cov_unit_entry_variance() {
        let model = GaussianChannelModel::iid(dims()).unwrap();
        // 16_000 samples * 64 entries ~ 1e6 entries.
        let ds = sample_gaussian(&model, 16_000, &Rng::new(1));
        let p = ds.mean_power();
        assert!((p - 1.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn rank_deficient_cov_allowed() {
        let model = GaussianChannelModel::new(dims(), ComplexMatrix::zeros(16, 16), None).unwrap();
        let ds = sample_gaussian(&model, 3, &Rng::new(1));
        assert!(ds.samples.iter().all(|h| h.matrix().max_abs() == 0.0));
    }

    #[test]
    fn non_psd_cov_rejected() {
        let r = ComplexMatrix::from_real_diag(&[1.0, -0.5]);
        let d = SystemDims::new(2, 2, 2).unwrap();
        assert!(matches!(GaussianChannelModel::new(d, r, None), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn gaussian_sampling_reproducible() {
        let model = GaussianChannelModel::exponential(dims(), 0.7).unwrap();
        let a = sample_gaussian(&model, 5, &Rng::new(42));
        let b = sample_gaussian(&model, 5, &Rng::new(42));
        assert_eq!(a, b);
    }

    #[test]
    fn clustered_normalized() {
        let model = ClusteredChannelModel::new(dims(), 3).unwrap();
        let ds = sample_clustered(&model, 200, &Rng::new(4));
        assert!(ds.normalized);
        assert!((0.99..=1.01).contains(&ds.mean_power()));
    }

    #[test]
    fn round_trip_and_corruption() {
        let model = GaussianChannelModel::iid(dims()).unwrap();
        let ds = sample_gaussian(&model, 7, &Rng::new(2));
        let bytes = encode_dataset(&ds).unwrap();
        assert_eq!(decode_dataset(&bytes).unwrap(), ds);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic(_))));

        let mut v2 = bytes.clone();
        v2[15] = 2;
        assert!(matches!(decode_dataset(&v2), Err(Error::VersionMismatch { found: 2, .. })));

        let cut = &bytes[..bytes.len() - 8];
        assert!(matches!(decode_dataset(cut), Err(Error::Truncated(_))));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset {
            dims: dims(),
            model: ModelDescriptor::External { note: "empty".into() },
            samples: vec![],
            normalized: false,
        };
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        assert_eq!(back, ds);
    }
}
