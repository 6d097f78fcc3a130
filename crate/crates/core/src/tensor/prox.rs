//! Proximal and subgradient operators used by the solver updates.

use super::linalg::{
    check_exponent, checked_svd, complex_svd, half_band_count, recompose_with, unfold_mode3, fold_mode3,
};
use super::{fft_mode3, ifft_mode3, Cube, SpectrumStack};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

/// Relative cutoff below which singular triplets are dropped from the subgradient.
const SUBGRADIENT_RANK_CUTOFF: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 100;

/// How the Schatten-p weights `p * sigma^(p-1) / mu` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShrinkRule {
    /// Weights taken at the singular values of the input.
    #[default]
    OneStep,
    /// Weights iterated to a fixed point `x = (sigma - p x^(p-1) / mu)_+`.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkParams {
    pub p: f64,
    pub mu: f64,
    pub rule: ShrinkRule,
}

impl ShrinkParams {
    pub fn new(p: f64, mu: f64) -> Self {
        Self {
            p,
            mu,
            rule: ShrinkRule::OneStep,
        }
    }

    pub fn with_rule(mut self, rule: ShrinkRule) -> Self {
        self.rule = rule;
        self
    }

    fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be positive and finite, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// Shrunk value for one singular value.
    pub fn shrink(&self, sigma: f64) -> f64 {
        if self.p == 1.0 {
            return (sigma - 1.0 / self.mu).max(0.0);
        }
        // sigma = 0 means an infinite weight
        if sigma <= 0.0 {
            return 0.0;
        }
        let weight = |x: f64| self.p * x.powf(self.p - 1.0) / self.mu;
        match self.rule {
            ShrinkRule::OneStep => (sigma - weight(sigma)).max(0.0),
            ShrinkRule::FixedPoint => {
                let mut x = sigma;
                for _ in 0..FIXED_POINT_MAX_ITER {
                    let next = (sigma - weight(x)).max(0.0);
                    if next == 0.0 {
                        return 0.0;
                    }
                    let done = (next - x).abs() <= 1e-14 * sigma;
                    x = next;
                    if done {
                        break;
                    }
                }
                x
            }
        }
    }
}

/// Weighted singular value thresholding of one complex matrix (one-step weights).
pub fn p_shrink_slice(m: &DMatrix<Complex64>, p: f64, mu: f64) -> Result<DMatrix<Complex64>> {
    p_shrink_slice_with(m, &ShrinkParams::new(p, mu))
}

pub fn p_shrink_slice_with(
    m: &DMatrix<Complex64>,
    params: &ShrinkParams,
) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    shrink_matrix(m, params)
}

fn shrink_matrix(m: &DMatrix<Complex64>, params: &ShrinkParams) -> Result<DMatrix<Complex64>> {
    let svd = complex_svd(m)?;
    let shrunk: Vec<f64> = svd.sigma.iter().map(|&s| params.shrink(s)).collect();
    Ok(recompose_with(&svd.u, &shrunk, &svd.v))
}

/// Proximal step of the Schatten-p tensor norm: shrink every frontal slice
/// of the mode-3 spectrum and transform back.
pub fn p_shrink_tensor(c: &Cube, p: f64, mu: f64) -> Result<Cube> {
    p_shrink_tensor_with(c, &ShrinkParams::new(p, mu))
}

pub fn p_shrink_tensor_with(c: &Cube, params: &ShrinkParams) -> Result<Cube> {
    params.validate()?;
    let spectrum = fft_mode3(c);
    let shrunk = shrink_spectrum(&spectrum, params, true)?;
    ifft_mode3(&shrunk)
}

/// Shrinks every frontal slice. With `use_symmetry`, only the first half of
/// the spectrum is decomposed and the rest is filled with conjugates.
pub(crate) fn shrink_spectrum(
    s: &SpectrumStack,
    params: &ShrinkParams,
    use_symmetry: bool,
) -> Result<SpectrumStack> {
    let (rows, cols, bands) = s.dims();
    let count = if use_symmetry {
        half_band_count(bands).min(bands)
    } else {
        bands
    };
    let slices: Vec<DMatrix<Complex64>> = (0..count)
        .into_par_iter()
        .map(|j| shrink_matrix(&s.slice(j), params))
        .collect::<Result<_>>()?;
    let mut out = SpectrumStack::zeros(rows, cols, bands);
    for (j, m) in slices.iter().enumerate() {
        out.set_slice(j, m);
    }
    if use_symmetry {
        for j in count..bands {
            out.set_slice(j, &slices[bands - j].conjugate());
        }
    }
    Ok(out)
}

/// Elementwise `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(c: &Cube, tau: f64) -> Result<Cube> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    Ok(c.map(|x| soft_threshold_scalar(x, tau)))
}

#[inline]
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    let mag = x.abs() - tau;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

/// `fold(U V^T)` from the thin SVD of the mode-3 unfolding, i.e. the
/// member of the nuclear-norm subdifferential with no extra null-space term.
pub fn nuclear_subgradient(c: &Cube) -> Result<Cube> {
    let (rows, cols, bands) = c.dims();
    let m = unfold_mode3(c);
    if m.is_empty() {
        return Ok(Cube::zeros(rows, cols, bands));
    }
    let (nr, nc) = m.shape();
    let svd = checked_svd(&m)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailure { rows: nr, cols: nc })?;
    let v_t = svd.v_t.as_ref().ok_or(Error::SvdFailure { rows: nr, cols: nc })?;
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let mut t = DMatrix::<f64>::zeros(nr, nc);
    if smax > 0.0 {
        for k in 0..sigma.len() {
            if sigma[k] < SUBGRADIENT_RANK_CUTOFF * smax {
                continue;
            }
            t.ger(1.0, &u.column(k), &v_t.row(k).transpose(), 1.0);
        }
    }
    fold_mode3(&t, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real(rows: usize, cols: usize, v: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| Complex64::new(x, 0.0)))
    }

    #[test]
    fn diagonal_svt_at_p_one() {
        let m = real(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let out = p_shrink_slice(&m, 1.0, 0.5).unwrap();
        let expected = real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((out - expected).norm() < 1e-14);
    }

    #[test]
    fn zero_matrix_stays_zero() {
        let z = DMatrix::<Complex64>::zeros(3, 2);
        for p in [0.1, 0.5, 1.0] {
            assert_eq!(p_shrink_slice(&z, p, 2.0).unwrap(), z);
        }
    }

    #[test]
    fn half_power_weight() {
        let m = real(1, 1, &[2.0]);
        let out = p_shrink_slice(&m, 0.5, 1.0).unwrap();
        let expected = 2.0 - 0.5 * 2f64.powf(-0.5);
        assert!((out[(0, 0)].re - expected).abs() < 1e-14);
        assert!((expected - 1.646_446_609_406_726).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_mu_and_p() {
        let m = real(1, 1, &[1.0]);
        assert!(p_shrink_slice(&m, 1.0, 0.0).is_err());
        assert!(p_shrink_slice(&m, 1.0, -1.0).is_err());
        assert!(p_shrink_slice(&m, 1.2, 1.0).is_err());
        assert!(p_shrink_tensor(&Cube::zeros(1, 1, 1), 0.5, 0.0).is_err());
    }

    #[test]
    fn fixed_point_satisfies_its_equation() {
        let params = ShrinkParams::new(0.5, 1.0).with_rule(ShrinkRule::FixedPoint);
        let x = params.shrink(2.0);
        assert!(x > 0.0);
        assert!((x - (2.0 - 0.5 * x.powf(-0.5))).abs() < 1e-12);
        // fixed point shrinks more than the one-step rule (weight grows as x drops)
        assert!(x < ShrinkParams::new(0.5, 1.0).shrink(2.0));
        // no positive fixed point: collapse to zero
        assert_eq!(params.shrink(0.5), 0.0);
    }

    #[test]
    fn zero_singular_value_with_small_p() {
        assert_eq!(ShrinkParams::new(0.3, 1e6).shrink(0.0), 0.0);
    }

    #[test]
    fn zero_cube_shrinks_to_zero() {
        let z = Cube::zeros(3, 3, 4);
        assert_eq!(p_shrink_tensor(&z, 0.5, 1.0).unwrap(), z);
    }

    #[test]
    fn symmetric_half_matches_full_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bands in [1, 2, 5, 6] {
            let c = Cube::from_fn(4, 3, bands, |_, _, _| rng.random_range(-1.0..1.0));
            let spectrum = fft_mode3(&c);
            for params in [ShrinkParams::new(1.0, 0.8), ShrinkParams::new(0.4, 2.0)] {
                let half = shrink_spectrum(&spectrum, &params, true).unwrap();
                let full = shrink_spectrum(&spectrum, &params, false).unwrap();
                let diff = half
                    .as_slice()
                    .iter()
                    .zip(full.as_slice())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-10, "bands {bands}: {diff}");
                // full computation is itself conjugate symmetric, so it inverts to a real cube
                assert!(ifft_mode3(&full).is_ok());
            }
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert!((soft_threshold_scalar(1.2, 0.5) - 0.7).abs() < 1e-15);
        assert_eq!(soft_threshold_scalar(-0.3, 0.5), 0.0);
        assert_eq!(soft_threshold_scalar(-2.0, 0.5), -1.5);
        assert!(soft_threshold(&Cube::zeros(1, 1, 1), -0.1).is_err());
    }

    #[test]
    fn subgradient_of_orthonormal_unfolding_is_itself() {
        // 3x2 spatial grid, 2 bands: unfolding is the 6x2 identity-padded matrix
        let c = Cube::from_fn(3, 2, 2, |r, col, b| {
            if r * 2 + col == b {
                1.0
            } else {
                0.0
            }
        });
        let t = nuclear_subgradient(&c).unwrap();
        let diff = t.sub(&c).unwrap().max_abs();
        assert!(diff < 1e-14);
    }

    #[test]
    fn subgradient_of_zero_is_zero() {
        let z = Cube::zeros(2, 3, 4);
        assert_eq!(nuclear_subgradient(&z).unwrap(), z);
    }
}
