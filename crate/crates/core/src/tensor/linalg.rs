use super::{fft_mode3, Cube, SpectrumStack};
use crate::error::{Error, Result};
use nalgebra::{ComplexField, DMatrix, Dyn, SVD};
use num_complex::Complex64;
use rayon::prelude::*;

const SVD_MAX_SWEEPS: usize = 10_000;

/// Convergence thresholds tried in order. nalgebra's bidiagonal QR can
/// return an inconsistent factorization of rank-deficient input when the
/// threshold sits at machine epsilon, so every result is checked by
/// reconstruction and a looser threshold is tried on failure.
const SVD_THRESHOLDS: [f64; 4] = [1e-13, 1e-12, 1e-11, 1e-10];
const SVD_RECONSTRUCTION_TOLERANCE: f64 = 1e-10;

/// Full-vector SVD whose reconstruction has been verified, sorted non-increasing.
pub(crate) fn checked_svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<SVD<T, Dyn, Dyn>> {
    let (rows, cols) = m.shape();
    let scale = m.norm();
    for eps in SVD_THRESHOLDS {
        let Some(svd) = m.clone().try_svd(true, true, eps, SVD_MAX_SWEEPS) else {
            continue;
        };
        let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) else {
            continue;
        };
        let back = u * DMatrix::from_diagonal(&svd.singular_values.map(T::from_real)) * v_t;
        if (back - m).norm() <= SVD_RECONSTRUCTION_TOLERANCE * scale {
            return Ok(svd);
        }
        log::debug!("{rows}x{cols} SVD failed its reconstruction check at threshold {eps:e}");
    }
    Err(Error::SvdFailure { rows, cols })
}

/// Thin SVD `m = U diag(sigma) V^H` with `sigma` non-increasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<Complex64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<Complex64>,
}

impl Svd {
    pub fn recompose(&self) -> DMatrix<Complex64> {
        recompose_with(&self.u, &self.sigma, &self.v)
    }
}

pub fn complex_svd(m: &DMatrix<Complex64>) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let svd = checked_svd(m)?;
    let u = svd.u.ok_or(Error::SvdFailure { rows, cols })?;
    let v_t = svd.v_t.ok_or(Error::SvdFailure { rows, cols })?;
    Ok(Svd {
        u,
        sigma: svd.singular_values.iter().copied().collect(),
        v: v_t.adjoint(),
    })
}

/// `U[:, ..k] diag(s) V[:, ..k]^H`, skipping zero weights.
pub(crate) fn recompose_with(
    u: &DMatrix<Complex64>,
    s: &[f64],
    v: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(u.nrows(), v.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk == 0.0 {
            continue;
        }
        let uk = u.column(k) * Complex64::new(sk, 0.0);
        out.ger(Complex64::new(1.0, 0.0), &uk, &v.column(k).conjugate(), Complex64::new(1.0, 0.0));
    }
    out
}

/// Singular values of a matrix over any real or complex field, non-increasing.
///
/// Falls back to nalgebra's unchecked values if no verified SVD is found.
pub fn singular_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    match checked_svd(m) {
        Ok(svd) => svd.singular_values.iter().copied().collect(),
        Err(e) => {
            log::warn!("{e}; using unverified singular values");
            m.singular_values().iter().copied().collect()
        }
    }
}

pub fn matrix_nuclear_norm<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    singular_values(m).iter().sum()
}

/// Number of frontal slices whose SVD determines the whole spectrum of a real cube.
pub(crate) fn half_band_count(bands: usize) -> usize {
    bands / 2 + 1
}

/// How many frontal slices of the full spectrum slice `j` (of the stored half) stands for.
pub(crate) fn conjugate_multiplicity(bands: usize, j: usize) -> usize {
    if j == 0 || 2 * j == bands {
        1
    } else {
        2
    }
}

/// Singular values of every frontal slice of `fft_mode3(c)`.
///
/// Only the first half of the spectrum is decomposed; conjugate partners
/// share singular values.
pub fn slice_singular_values(c: &Cube) -> Vec<Vec<f64>> {
    let bands = c.bands();
    if bands == 0 {
        return Vec::new();
    }
    let stack = fft_mode3(c);
    let half: Vec<Vec<f64>> = (0..half_band_count(bands))
        .into_par_iter()
        .map(|j| singular_values(&stack.slice(j)))
        .collect();
    (0..bands)
        .map(|j| half[j.min(bands - j)].clone())
        .collect()
}

fn half_spectrum_sum(stack: &SpectrumStack, term: impl Fn(f64) -> f64 + Sync) -> f64 {
    let (rows, cols, bands) = stack.dims();
    if bands == 0 {
        return 0.0;
    }
    let half: Vec<Vec<f64>> = (0..half_band_count(bands))
        .into_par_iter()
        .map(|j| singular_values(&stack.slice(j)))
        .collect();
    // FFT roundoff leaves singular values at the eps level where the exact
    // spectrum is zero; sigma^p with p < 1 would inflate them.
    let smax = half.iter().flatten().copied().fold(0.0, f64::max);
    let cutoff = f64::EPSILON * smax * rows.max(cols).max(bands) as f64;
    half.iter()
        .enumerate()
        .map(|(j, sigma)| {
            let s: f64 = sigma.iter().filter(|&&s| s > cutoff).map(|&s| term(s)).sum();
            s * conjugate_multiplicity(bands, j) as f64
        })
        .sum()
}

/// Sum of singular values over all frontal slices of the mode-3 spectrum.
pub fn tensor_nuclear_norm(c: &Cube) -> f64 {
    half_spectrum_sum(&fft_mode3(c), |s| s)
}

/// Sum of `sigma^p` over all frontal slices of the mode-3 spectrum.
pub fn schatten_p_norm(c: &Cube, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(half_spectrum_sum(&fft_mode3(c), |s| s.powf(p)))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {p}")))
    }
}

/// Mode-3 unfolding: an `(rows*cols) x bands` matrix whose row `r*cols + c` is tube `(r, c)`.
pub fn unfold_mode3(c: &Cube) -> DMatrix<f64> {
    let bands = c.bands();
    DMatrix::from_row_iterator(c.rows() * c.cols(), bands, c.as_slice().iter().copied())
}

/// Inverse of [`unfold_mode3`].
pub fn fold_mode3(m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<Cube> {
    if m.nrows() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "unfolding has {} rows, expected {}",
            m.nrows(),
            rows * cols
        )));
    }
    let bands = m.ncols();
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        data.extend(m.row(i).iter().copied());
    }
    Cube::new(rows, cols, bands, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn diagonal_svd() {
        let m = DMatrix::from_row_slice(2, 2, &[c(3.0), c(0.0), c(0.0), c(1.0)]);
        let svd = complex_svd(&m).unwrap();
        assert!((svd.sigma[0] - 3.0).abs() < 1e-14);
        assert!((svd.sigma[1] - 1.0).abs() < 1e-14);
        assert!((svd.recompose() - m).norm() < 1e-13);
    }

    #[test]
    fn rank_deficient_svd_reconstructs() {
        // rank-one products that trip the unchecked factorization
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..300 {
            let a = DMatrix::from_fn(7, 1, |_, _| c(next()));
            let b = DMatrix::from_fn(1, 8, |_, _| c(next()));
            let m = a * b;
            let svd = complex_svd(&m).unwrap();
            assert!((svd.recompose() - &m).norm() <= 1e-10 * m.norm());
            assert!(svd.sigma[1] <= 1e-12 * svd.sigma[0]);
        }
    }

    #[test]
    fn zero_matrix_svd() {
        let svd = complex_svd(&DMatrix::zeros(3, 2)).unwrap();
        assert!(svd.sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn matrix_nuclear_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert!((matrix_nuclear_norm(&d) - 4.0).abs() < 1e-14);
        assert_eq!(matrix_nuclear_norm(&DMatrix::<f64>::zeros(3, 3)), 0.0);
        let u = nalgebra::DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let v = nalgebra::DVector::from_vec(vec![0.0, 1.0]);
        let outer = &u * v.transpose();
        assert!((matrix_nuclear_norm(&outer) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_cube_norms() {
        let z = Cube::zeros(3, 4, 5);
        assert_eq!(tensor_nuclear_norm(&z), 0.0);
        assert_eq!(schatten_p_norm(&z, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn exponent_range() {
        let z = Cube::zeros(1, 1, 1);
        assert!(schatten_p_norm(&z, 0.0).is_err());
        assert!(schatten_p_norm(&z, 1.5).is_err());
        assert!(schatten_p_norm(&z, 1.0).is_ok());
    }

    #[test]
    fn constant_tube_schatten_half() {
        // A = diag(4), n3 = 6: one singular value 24 at frequency zero
        let cube = Cube::filled(1, 1, 6, 4.0);
        let v = schatten_p_norm(&cube, 0.5).unwrap();
        assert!((v - 24f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unfold_fold_round_trip() {
        let cube = Cube::from_fn(3, 2, 4, |r, c, b| (r * 8 + c * 4 + b) as f64);
        let m = unfold_mode3(&cube);
        assert_eq!(m.shape(), (6, 4));
        assert_eq!(m[(3, 2)], cube.get(1, 1, 2));
        assert_eq!(fold_mode3(&m, 3, 2).unwrap(), cube);
    }

    #[test]
    fn multiplicities_cover_all_bands() {
        for bands in 1..10 {
            let total: usize = (0..half_band_count(bands))
                .map(|j| conjugate_multiplicity(bands, j))
                .sum();
            assert_eq!(total, bands);
        }
    }
}
