//! Dense complex matrices and the handful of factorizations the solver needs.
//!
//! Storage is row-major `Complex64`, which is laid out as interleaved
//! `(re, im)` pairs of `f64`.

use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries. Rejects length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![Complex64::new(0.0, 0.0); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec_unchecked(rows, cols, data)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_vec_unchecked(self.rows, rhs.cols, out))
    }

    fn check_same_shape(&self, rhs: &Self, op: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.lin_comb(1.0, rhs, 1.0)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.lin_comb(1.0, rhs, -1.0)
    }

    /// `a * self + b * rhs`.
    pub fn lin_comb(&self, a: f64, rhs: &Self, b: f64) -> Result<Self> {
        self.check_same_shape(rhs, "linear combination")?;
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&z| f(z)).collect())
    }

    /// Multiplies column `j` by `d[j]`, i.e. `self * diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.cols {
            return Err(Error::Shape(format!(
                "column scaling with {} factors for {} columns",
                d.len(),
                self.cols
            )));
        }
        let cols = self.cols;
        Ok(Self::from_fn(self.rows, cols, |i, j| self.data[i * cols + j] * d[j]))
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Real inner product `Re <self, rhs>_F`.
    pub fn real_inner(&self, rhs: &Self) -> Result<f64> {
        self.check_same_shape(rhs, "inner product")?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .sum())
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `||self - self^H||_F / ||self||_F` for square matrices.
    pub fn hermitian_asymmetry(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut diff = 0.0;
        for i in 0..n {
            for j in 0..n {
                diff += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        let norm = self.frobenius_norm();
        Ok(if norm == 0.0 { 0.0 } else { diff.sqrt() / norm })
    }

    /// Hermitian eigendecomposition `self = U diag(values) U^H` by cyclic
    /// Jacobi rotations. Eigenvalues are returned in descending order.
    pub fn hermitian_evd(&self) -> Result<HermitianEvd> {
        let asym = self.hermitian_asymmetry()?;
        if asym > 1e-10 {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let n = self.rows;
        // Symmetrize exactly so rotations act on a true Hermitian matrix.
        let mut a = Self::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5);
        let mut v = Self::identity(n);
        let scale = a.frobenius_norm();

        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].norm_sqr())
                .sum();
            if scale == 0.0 || off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
        order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]));
        let values = order.iter().map(|&k| diag[k]).collect();
        let vectors = Self::from_fn(n, n, |i, j| v[(i, order[j])]);
        Ok(HermitianEvd { vectors, values })
    }

    /// Solves `self * X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        if rhs.rows != self.rows {
            return Err(Error::Shape(format!(
                "solve with {}x{} system and {}x{} right-hand side",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        let scale = self.max_abs();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm()))
                .unwrap_or(col);
            let pivot_abs = a[pivot * n + col].norm();
            if pivot_abs == 0.0 || pivot_abs <= scale * f64::EPSILON * n as f64 * 1e-3 {
                return Err(Error::Singular);
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                for k in 0..m {
                    b.swap(col * m + k, pivot * m + k);
                }
            }
            let inv = a[col * n + col].inv();
            for row in (col + 1)..n {
                let factor = a[row * n + col] * inv;
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for k in col..n {
                    let t = a[col * n + k];
                    a[row * n + k] -= factor * t;
                }
                for k in 0..m {
                    let t = b[col * m + k];
                    b[row * m + k] -= factor * t;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = a[col * n + col].inv();
            for k in 0..m {
                let mut acc = b[col * m + k];
                for j in (col + 1)..n {
                    acc -= a[col * n + j] * b[j * m + k];
                }
                b[col * m + k] = acc * inv;
            }
        }
        let out = Self::from_vec_unchecked(n, m, b);
        if !out.is_finite() {
            return Err(Error::Singular);
        }
        Ok(out)
    }

    /// Solves `X * self = rhs`.
    pub fn solve_right(&self, rhs: &Self) -> Result<Self> {
        Ok(self.transpose().solve(&rhs.transpose())?.transpose())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }
}

/// One complex Jacobi rotation zeroing `a[p][q]`.
///
/// With `a[p][q] = r e^{i phi}`, the unitary `G = diag(1, e^{-i phi}) R` makes
/// the pivot real and then applies the real symmetric rotation `R`.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let n = a.rows;
    let phase = apq / r;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let e_minus = phase.conj();

    // Columns: A <- A G.
    for m in [&mut *a, &mut *v] {
        for i in 0..n {
            let xp = m.data[i * n + p];
            let xq = m.data[i * n + q];
            m.data[i * n + p] = xp * c - xq * e_minus * s;
            m.data[i * n + q] = xp * s + xq * e_minus * c;
        }
    }
    // Rows: A <- G^H A.
    for j in 0..n {
        let xp = a.data[p * n + j];
        let xq = a.data[q * n + j];
        a.data[p * n + j] = xp * c - xq * phase * s;
        a.data[q * n + j] = xp * s + xq * phase * c;
    }
    a.data[p * n + q] = Complex64::new(0.0, 0.0);
    a.data[q * n + p] = Complex64::new(0.0, 0.0);
    a.data[p * n + p] = Complex64::new(a.data[p * n + p].re, 0.0);
    a.data[q * n + q] = Complex64::new(a.data[q * n + q].re, 0.0);
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct HermitianEvd {
    pub vectors: ComplexMatrix,
    pub values: Vec<f64>,
}

impl HermitianEvd {
    /// `U diag(f(lambda)) U^H`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let d: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = self
            .vectors
            .scale_columns(&d)
            .expect("eigenvector count matches eigenvalue count");
        scaled
            .matmul(&self.vectors.conj_transpose())
            .expect("square factors")
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.spectral_map(|l| l)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}
