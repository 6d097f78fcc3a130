use super::{Cube, SpectrumStack};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Maximum relative deviation from conjugate symmetry accepted by [`ifft_mode3`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Unnormalized forward DFT of every spectral tube.
pub fn fft_mode3(c: &Cube) -> SpectrumStack {
    let (rows, cols, bands) = c.dims();
    let mut buf: Vec<Complex64> = c
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    if bands > 1 && !buf.is_empty() {
        let fft = FftPlanner::new().plan_fft_forward(bands);
        // tubes are contiguous, so one call transforms every chunk of `bands`
        fft.process(&mut buf);
    }
    SpectrumStack::new(rows, cols, bands, buf).expect("dimensions carried over")
}

/// Inverse DFT of every tube with `1/bands` normalization.
///
/// The input must be conjugate-symmetric along the band axis to within
/// [`SYMMETRY_TOLERANCE`] (relative to its largest magnitude); the remaining
/// imaginary residue is discarded.
pub fn ifft_mode3(s: &SpectrumStack) -> Result<Cube> {
    let (rows, cols, bands) = s.dims();
    let deviation = symmetry_deviation(s);
    let scale = s.as_slice().iter().fold(1.0f64, |m, z| m.max(z.norm()));
    if deviation > SYMMETRY_TOLERANCE * scale {
        return Err(Error::SymmetryViolation { deviation });
    }
    let mut buf = s.as_slice().to_vec();
    if bands > 1 && !buf.is_empty() {
        let ifft = FftPlanner::new().plan_fft_inverse(bands);
        ifft.process(&mut buf);
    }
    let norm = 1.0 / bands.max(1) as f64;
    let data: Vec<f64> = buf.iter().map(|z| z.re * norm).collect();
    let out = Cube::from_raw(rows, cols, bands, data);
    if let Some(index) = out.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(out)
}

/// Largest `|s[k] - conj(s[(n - k) mod n])|` over all tubes.
fn symmetry_deviation(s: &SpectrumStack) -> f64 {
    let n = s.bands();
    if n == 0 {
        return 0.0;
    }
    s.as_slice()
        .chunks_exact(n)
        .flat_map(|tube| (0..n).map(move |k| (tube[k] - tube[(n - k) % n].conj()).norm()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_dft() {
        let c = Cube::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
        let s = fft_mode3(&c);
        assert_eq!(s.tube(0, 0), &[Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)]);

        let c = Cube::new(1, 1, 2, vec![1.0, -1.0]).unwrap();
        let s = fft_mode3(&c);
        assert_eq!(s.tube(0, 0), &[Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)]);
    }

    #[test]
    fn inverse_two_point() {
        let s = SpectrumStack::new(
            1,
            1,
            2,
            vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let c = ifft_mode3(&s).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_stack_inverts_to_zero() {
        let c = ifft_mode3(&SpectrumStack::zeros(3, 2, 5)).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let s = SpectrumStack::new(
            1,
            1,
            3,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 1.0),
            ],
        )
        .unwrap();
        assert!(matches!(ifft_mode3(&s), Err(Error::SymmetryViolation { .. })));
    }

    #[test]
    fn conjugate_pairs_in_forward_transform() {
        let c = Cube::from_fn(2, 2, 5, |r, col, b| ((r + 2 * col + 3 * b) as f64).sin());
        let s = fft_mode3(&c);
        for j in 1..5 {
            for r in 0..2 {
                for col in 0..2 {
                    let d = s.get(r, col, j) - s.get(r, col, 5 - j).conj();
                    assert!(d.norm() < 1e-12);
                }
            }
        }
    }
}
