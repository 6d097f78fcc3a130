//! Preprocessing: reduce a cube to its first principal component and cut
//! that single band into superpixels.

use crate::error::{Error, Result};
use crate::regions::LabelMap;
use crate::tensor::Cube;
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::VecDeque;

pub const DEFAULT_COMPACTNESS: f64 = 0.1;
const SLIC_ITERATIONS: usize = 10;

/// Single-band image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl BandImage {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} image needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Projects every pixel spectrum (mean-centered per band) onto the leading
/// eigenvector of the band covariance. The eigenvector's largest-magnitude
/// entry is made positive.
pub fn pca_first_component(c: &Cube) -> Result<BandImage> {
    let (rows, cols, bands) = c.dims();
    let pixels = rows * cols;
    if bands == 0 || pixels == 0 {
        return Err(Error::DimensionMismatch("cube has no pixels or bands".into()));
    }
    let mut mean = vec![0.0; bands];
    for tube in c.as_slice().chunks_exact(bands) {
        for (m, v) in mean.iter_mut().zip(tube) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= pixels as f64);

    let mut cov = DMatrix::<f64>::zeros(bands, bands);
    let mut centered = vec![0.0; bands];
    for tube in c.as_slice().chunks_exact(bands) {
        for b in 0..bands {
            centered[b] = tube[b] - mean[b];
        }
        for i in 0..bands {
            for j in i..bands {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..bands {
        for j in i..bands {
            let v = cov[(i, j)] / pixels as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroCovariance);
    }

    let eig = SymmetricEigen::new(cov);
    let mut lead = 0;
    for k in 1..bands {
        if eig.eigenvalues[k] > eig.eigenvalues[lead] {
            lead = k;
        }
    }
    if eig.eigenvalues[lead] <= 0.0 {
        return Err(Error::ZeroCovariance);
    }
    let mut axis: Vec<f64> = eig.eigenvectors.column(lead).iter().copied().collect();
    let mut pivot = 0;
    for k in 1..bands {
        if axis[k].abs() > axis[pivot].abs() {
            pivot = k;
        }
    }
    if axis[pivot] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }

    let values = c
        .as_slice()
        .chunks_exact(bands)
        .map(|tube| {
            tube.iter()
                .zip(&mean)
                .zip(&axis)
                .map(|((v, m), a)| (v - m) * a)
                .sum()
        })
        .collect();
    BandImage::new(rows, cols, values)
}

#[derive(Debug, Clone, Copy)]
struct Center {
    value: f64,
    row: f64,
    col: f64,
}

/// Seed grid with `grid_rows * grid_cols <= n` cells, shaped like the image.
fn seed_grid(rows: usize, cols: usize, n: usize) -> (usize, usize) {
    let ideal = (n as f64 * rows as f64 / cols as f64).sqrt().round() as usize;
    let grid_rows = ideal.clamp(1, n.min(rows));
    let grid_cols = (n / grid_rows).clamp(1, cols);
    (grid_rows, grid_cols)
}

/// SLIC-style superpixels on a single band.
///
/// Values are rescaled to `[0, 1]`; the distance between a pixel and a
/// center is `|dv| + compactness * spatial / step`. Centers start on a
/// regular grid and are refined for a fixed number of iterations, after
/// which every label is made connected by folding stray fragments into
/// their largest neighbouring region.
pub fn slic_segment(img: &BandImage, n: usize, compactness: f64) -> Result<LabelMap> {
    let (rows, cols) = (img.rows, img.cols);
    if n == 0 || n > rows * cols {
        return Err(Error::InvalidParameter(format!(
            "superpixel count {n} outside 1..={}",
            rows * cols
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "compactness must be positive, got {compactness}"
        )));
    }

    let lo = img.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let norm: Vec<f64> = img
        .values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();

    let (grid_rows, grid_cols) = seed_grid(rows, cols, n);
    let step = ((rows * cols) as f64 / (grid_rows * grid_cols) as f64).sqrt();
    let mut centers: Vec<Center> = Vec::with_capacity(grid_rows * grid_cols);
    for i in 0..grid_rows {
        for j in 0..grid_cols {
            let row = (i as f64 + 0.5) * rows as f64 / grid_rows as f64;
            let col = (j as f64 + 0.5) * cols as f64 / grid_cols as f64;
            let (pr, pc) = ((row as usize).min(rows - 1), (col as usize).min(cols - 1));
            centers.push(Center {
                value: norm[pr * cols + pc],
                row,
                col,
            });
        }
    }

    let mut assign = vec![0usize; rows * cols];
    let window = 2.0 * step;
    for _ in 0..SLIC_ITERATIONS {
        for r in 0..rows {
            for c in 0..cols {
                let v = norm[r * cols + c];
                let dist = |k: &Center| {
                    let dr = k.row - r as f64;
                    let dc = k.col - c as f64;
                    (v - k.value).abs() + compactness * (dr * dr + dc * dc).sqrt() / step
                };
                let mut best: Option<(usize, f64)> = None;
                for (k, center) in centers.iter().enumerate() {
                    if (center.row - r as f64).abs() > window || (center.col - c as f64).abs() > window {
                        continue;
                    }
                    let d = dist(center);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
                if best.is_none() {
                    for (k, center) in centers.iter().enumerate() {
                        let d = dist(center);
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((k, d));
                        }
                    }
                }
                assign[r * cols + c] = best.expect("at least one center").0;
            }
        }

        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for r in 0..rows {
            for c in 0..cols {
                let s = &mut sums[assign[r * cols + c]];
                s.0 += norm[r * cols + c];
                s.1 += r as f64;
                s.2 += c as f64;
                s.3 += 1;
            }
        }
        for (center, &(v, r, c, count)) in centers.iter_mut().zip(&sums) {
            if count > 0 {
                let k = count as f64;
                *center = Center {
                    value: v / k,
                    row: r / k,
                    col: c / k,
                };
            }
        }
    }

    let connected = enforce_connectivity(rows, cols, &assign);
    LabelMap::compacted(rows, cols, &connected)
}

/// Keeps the largest 4-connected component of every label and merges the
/// remaining components into their largest adjacent region.
fn enforce_connectivity(rows: usize, cols: usize, labels: &[usize]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; rows * cols];
    let mut comp_label = Vec::new();
    let mut comp_pixels: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    let neighbours = |i: usize| {
        let (r, c) = (i / cols, i % cols);
        let mut out = [NONE; 4];
        if r > 0 {
            out[0] = i - cols;
        }
        if r + 1 < rows {
            out[1] = i + cols;
        }
        if c > 0 {
            out[2] = i - 1;
        }
        if c + 1 < cols {
            out[3] = i + 1;
        }
        out
    };
    for start in 0..rows * cols {
        if comp[start] != NONE {
            continue;
        }
        let id = comp_label.len();
        comp_label.push(labels[start]);
        let mut members = vec![start];
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in neighbours(i) {
                if j != NONE && comp[j] == NONE && labels[j] == labels[i] {
                    comp[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp_pixels.push(members);
    }

    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut main_comp = vec![NONE; max_label + 1];
    for (id, &l) in comp_label.iter().enumerate() {
        let m = main_comp[l];
        if m == NONE || comp_pixels[id].len() > comp_pixels[m].len() {
            main_comp[l] = id;
        }
    }
    let mut final_label: Vec<Option<usize>> = comp_label
        .iter()
        .enumerate()
        .map(|(id, &l)| (main_comp[l] == id).then_some(l))
        .collect();
    let mut region_size = vec![0usize; max_label + 1];
    for (id, fl) in final_label.iter().enumerate() {
        if let Some(l) = fl {
            region_size[*l] += comp_pixels[id].len();
        }
    }

    let mut pending: Vec<usize> = (0..comp_label.len())
        .filter(|&id| final_label[id].is_none())
        .collect();
    while !pending.is_empty() {
        let mut deferred = Vec::new();
        for &id in &pending {
            let mut best: Option<usize> = None;
            for &i in &comp_pixels[id] {
                for j in neighbours(i) {
                    if j == NONE {
                        continue;
                    }
                    if let Some(l) = final_label[comp[j]] {
                        if comp[j] == id {
                            continue;
                        }
                        best = match best {
                            Some(b)
                                if region_size[b] > region_size[l]
                                    || (region_size[b] == region_size[l] && b < l) =>
                            {
                                Some(b)
                            }
                            _ => Some(l),
                        };
                    }
                }
            }
            match best {
                Some(l) => {
                    final_label[id] = Some(l);
                    region_size[l] += comp_pixels[id].len();
                }
                None => deferred.push(id),
            }
        }
        assert!(
            deferred.len() < pending.len(),
            "connectivity pass made no progress"
        );
        pending = deferred;
    }

    (0..rows * cols)
        .map(|i| final_label[comp[i]].expect("every component resolved"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::regions_from_labels;

    #[test]
    fn constant_band_is_ignored_by_pca() {
        let c = Cube::from_fn(3, 3, 2, |r, col, b| if b == 0 { (r * 3 + col) as f64 } else { 7.0 });
        let img = pca_first_component(&c).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                let expected = (r * 3 + col) as f64 - 4.0;
                assert!((img.get(r, col) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlated_bands_project_by_sqrt5() {
        let t = [0.0, 1.0, 3.0, 4.0, 7.0, 9.0];
        let c = Cube::from_fn(2, 3, 2, |r, col, b| t[r * 3 + col] * (b + 1) as f64);
        let img = pca_first_component(&c).unwrap();
        let mean = t.iter().sum::<f64>() / 6.0;
        for (i, &ti) in t.iter().enumerate() {
            assert!((img.values()[i] - 5f64.sqrt() * (ti - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_cube_has_no_component() {
        let c = Cube::filled(3, 3, 4, 2.0);
        assert!(matches!(pca_first_component(&c), Err(Error::ZeroCovariance)));
    }

    #[test]
    fn single_superpixel() {
        let img = BandImage::new(4, 5, (0..20).map(|v| v as f64).collect()).unwrap();
        let lm = slic_segment(&img, 1, 0.1).unwrap();
        assert!(lm.as_slice().iter().all(|&l| l == 0));
    }

    #[test]
    fn two_half_planes() {
        let img = BandImage::new(10, 10, (0..100).map(|i| if i % 10 < 5 { 0.0 } else { 1.0 }).collect())
            .unwrap();
        let lm = slic_segment(&img, 2, 0.01).unwrap();
        assert_eq!(lm.region_count(), 2);
        for i in 0..100 {
            assert_eq!(lm.as_slice()[i], usize::from(i % 10 >= 5));
        }
    }

    #[test]
    fn count_out_of_range() {
        let img = BandImage::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(slic_segment(&img, 0, 0.1).is_err());
        assert!(slic_segment(&img, 5, 0.1).is_err());
        assert!(slic_segment(&img, 2, 0.0).is_err());
    }

    #[test]
    fn output_is_valid_partition() {
        let img = BandImage::new(
            17,
            23,
            (0..17 * 23).map(|i| ((i * 7919) % 101) as f64).collect(),
        )
        .unwrap();
        for n in [1, 3, 8, 30] {
            let lm = slic_segment(&img, n, 0.1).unwrap();
            assert!(lm.region_count() >= 1 && lm.region_count() <= 2 * n);
            let regions = regions_from_labels(&lm).unwrap();
            assert_eq!(regions.iter().map(|r| r.pixels.len()).sum::<usize>(), 17 * 23);
        }
    }

    #[test]
    fn orphan_fragments_are_absorbed() {
        // label 1 appears in two separate pieces
        let labels = vec![1, 0, 0, 0, 1, 1];
        let out = enforce_connectivity(2, 3, &labels);
        assert_eq!(out, vec![0, 0, 0, 0, 1, 1]);
    }
}
