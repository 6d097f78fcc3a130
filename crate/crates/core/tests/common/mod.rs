//! Reference computations that avoid the library's FFT and SVD paths.
#![allow(dead_code)]

use itlrr::Cube;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cube(rng: &mut impl Rng, rows: usize, cols: usize, bands: usize) -> Cube {
    Cube::from_fn(rows, cols, bands, |_, _, _| rng.sample(StandardNormal))
}

/// Direct O(n^2) DFT of every tube; returns `spectrum[band]` as a rows x cols matrix.
pub fn naive_dft_slices(c: &Cube) -> Vec<DMatrix<Complex64>> {
    let (rows, cols, n) = c.dims();
    (0..n)
        .map(|k| {
            DMatrix::from_fn(rows, cols, |r, col| {
                (0..n)
                    .map(|t| {
                        let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                        Complex64::from_polar(c.get(r, col, t), ang)
                    })
                    .sum()
            })
        })
        .collect()
}

/// Direct inverse DFT of frequency slices back to a real cube (imaginary part returned separately).
pub fn naive_idft(slices: &[DMatrix<Complex64>]) -> (Cube, f64) {
    let n = slices.len();
    let (rows, cols) = slices[0].shape();
    let mut max_imag = 0.0f64;
    let mut data = Vec::with_capacity(rows * cols * n);
    for r in 0..rows {
        for col in 0..cols {
            for t in 0..n {
                let z: Complex64 = (0..n)
                    .map(|k| {
                        let ang = 2.0 * PI * (k * t) as f64 / n as f64;
                        slices[k][(r, col)] * Complex64::from_polar(1.0, ang)
                    })
                    .sum::<Complex64>()
                    / n as f64;
                max_imag = max_imag.max(z.im.abs());
                data.push(z.re);
            }
        }
    }
    (Cube::new(rows, cols, n, data).unwrap(), max_imag)
}

/// One-sided Jacobi singular values of a real matrix, non-increasing.
pub fn jacobi_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let a = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let x = cols[p][i];
                    let y = cols[q][i];
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Singular values of a complex matrix through its real 2m x 2n embedding.
pub fn complex_singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let real = DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    jacobi_singular_values(&real).into_iter().step_by(2).collect()
}

/// Sum over all frequency slices of the oracle singular values.
pub fn brute_force_tnn(c: &Cube) -> f64 {
    naive_dft_slices(c)
        .iter()
        .map(|s| complex_singular_values(s).iter().sum::<f64>())
        .sum()
}

pub fn unfold(c: &Cube) -> DMatrix<f64> {
    let (rows, cols, bands) = c.dims();
    DMatrix::from_fn(rows * cols, bands, |i, b| c.get(i / cols, i % cols, b))
}

/// Tubal-rank-`rank` cube: sum of `rank` circular tube convolutions of
/// Gaussian factors, computed directly in the band domain.
pub fn tubal_low_rank(rng: &mut impl Rng, n1: usize, n2: usize, n3: usize, rank: usize) -> Cube {
    let a: Vec<f64> = (0..n1 * rank * n3).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..rank * n2 * n3).map(|_| rng.sample(StandardNormal)).collect();
    Cube::from_fn(n1, n2, n3, |i, j, t| {
        let mut s = 0.0;
        for k in 0..rank {
            for u in 0..n3 {
                s += a[(i * rank + k) * n3 + u] * b[(k * n2 + j) * n3 + (t + n3 - u) % n3];
            }
        }
        s
    })
}

/// `round(rate * entries)` entries set to +-1, the rest zero.
pub fn sparse_signs(rng: &mut impl Rng, rows: usize, cols: usize, bands: usize, rate: f64) -> Cube {
    let total = rows * cols * bands;
    let mut data = vec![0.0; total];
    let count = (rate * total as f64).round() as usize;
    for i in rand::seq::index::sample(rng, total, count) {
        data[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    Cube::new(rows, cols, bands, data).unwrap()
}

/// Minimizer of `tau |s| + (s - x)^2 / 2` by grid search with the given step.
pub fn grid_prox(x: f64, tau: f64, step: f64) -> f64 {
    let span = 2.0 * x.abs();
    let steps = (2.0 * span / step).ceil() as i64;
    let mut best = (0.0, tau * 0.0 + 0.5 * x * x);
    for k in 0..=steps {
        let s = -span + k as f64 * step;
        let f = tau * s.abs() + 0.5 * (s - x) * (s - x);
        if f < best.1 {
            best = (s, f);
        }
    }
    best.0
}
