//! Dense third-order tensors and the mode-3 Fourier algebra built on them.
//!
//! A [`Cube`] stores `rows x cols x bands` real values with the band index
//! varying fastest inside a pixel and pixels laid out row-major, so every
//! spectral tube is a contiguous run of `bands` values. [`SpectrumStack`]
//! uses the same layout for its complex entries.

mod fft;
mod linalg;
mod prox;

pub(crate) use linalg::checked_svd;
pub use fft::{fft_mode3, ifft_mode3, SYMMETRY_TOLERANCE};
pub use linalg::{
    complex_svd, fold_mode3, matrix_nuclear_norm, schatten_p_norm, slice_singular_values,
    tensor_nuclear_norm, unfold_mode3, Svd,
};
pub use prox::{
    nuclear_subgradient, p_shrink_slice, p_shrink_slice_with, p_shrink_tensor,
    p_shrink_tensor_with, soft_threshold, soft_threshold_scalar, ShrinkParams, ShrinkRule,
};

use crate::error::{Error, Result};
use num_complex::Complex64;
use nalgebra::DMatrix;

/// Real-valued `rows x cols x bands` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f64>,
}

impl Cube {
    /// Builds a cube from data in band-fastest, row-major pixel order.
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| Error::DimensionMismatch("cube size overflows".into()))?;
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols}x{bands} cube needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        Self::filled(rows, cols, bands, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, bands: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            rows,
            cols,
            bands,
            data: vec![value; rows * cols * bands],
        }
    }

    /// Builds a cube by evaluating `f(row, col, band)` at every entry.
    ///
    /// Panics if `f` yields a non-finite value.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols * bands);
        for r in 0..rows {
            for c in 0..cols {
                for b in 0..bands {
                    data.push(f(r, c, b));
                }
            }
        }
        Self::new(rows, cols, bands, data).expect("from_fn produced a non-finite entry")
    }

    /// Skips the finiteness scan; callers check with [`Cube::is_finite`].
    pub(crate) fn from_raw(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols * bands, data.len());
        Self {
            rows,
            cols,
            bands,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.bands)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        (row * self.cols + col) * self.bands + band
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[self.index(row, col, band)]
    }

    /// Panics if `value` is not finite.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, band: usize, value: f64) {
        assert!(value.is_finite(), "cube entries must be finite");
        let i = self.index(row, col, band);
        self.data[i] = value;
    }

    pub fn tube(&self, row: usize, col: usize) -> &[f64] {
        let start = self.index(row, col, 0);
        &self.data[start..start + self.bands]
    }

    pub(crate) fn tube_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = self.index(row, col, 0);
        &mut self.data[start..start + self.bands]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_dims(&self, other: &Cube) -> bool {
        self.dims() == other.dims()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry (0 for an empty cube).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Cube {
        Cube::from_raw(
            self.rows,
            self.cols,
            self.bands,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Elementwise `f(self, other)`; errors on mismatched dimensions.
    pub fn zip_map(&self, other: &Cube, f: impl Fn(f64, f64) -> f64) -> Result<Cube> {
        if !self.same_dims(other) {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Cube::from_raw(
            self.rows,
            self.cols,
            self.bands,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Cube) -> Result<Cube> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Cube) -> Result<Cube> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Cube {
        self.map(|v| v * factor)
    }

    /// Frontal slice `band` as a `rows x cols` matrix.
    pub fn frontal_slice(&self, band: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c, band))
    }
}

/// Complex `rows x cols x bands` tensor, typically the mode-3 DFT of a [`Cube`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumStack {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<Complex64>,
}

impl SpectrumStack {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols * bands != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols}x{bands} stack needs {} values, got {}",
                rows * cols * bands,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        Self {
            rows,
            cols,
            bands,
            data: vec![Complex64::new(0.0, 0.0); rows * cols * bands],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.bands)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> Complex64 {
        self.data[(row * self.cols + col) * self.bands + band]
    }

    pub fn tube(&self, row: usize, col: usize) -> &[Complex64] {
        let start = (row * self.cols + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Frontal slice `band` as a `rows x cols` complex matrix.
    pub fn slice(&self, band: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c, band))
    }

    pub fn set_slice(&mut self, band: usize, m: &DMatrix<Complex64>) {
        assert_eq!(m.shape(), (self.rows, self.cols), "slice shape mismatch");
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[(r * self.cols + c) * self.bands + band] = m[(r, c)];
            }
        }
    }
}
