//! Irregular regions from a superpixel label map, and the packing of a
//! region plus its complement cells into one regular bounding-box block.

use crate::error::{Error, Result};
use crate::tensor::Cube;
use std::collections::BTreeMap;

/// Per-pixel region ids in row-major order; ids are exactly `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    labels: Vec<usize>,
    count: usize,
}

impl LabelMap {
    /// Validates that every id in `0..=max` occurs.
    pub fn new(rows: usize, cols: usize, labels: Vec<usize>) -> Result<Self> {
        if rows * cols != labels.len() {
            return Err(Error::MalformedLabels(format!(
                "{rows}x{cols} map needs {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::MalformedLabels("empty label map".into()));
        }
        let count = labels.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MalformedLabels(format!("region id {missing} is missing")));
        }
        Ok(Self {
            rows,
            cols,
            labels,
            count,
        })
    }

    /// Relabels arbitrary ids to `0..n` preserving their ascending order.
    pub fn compacted<T: Ord + Copy>(rows: usize, cols: usize, raw: &[T]) -> Result<Self> {
        let ids: BTreeMap<T, usize> = {
            let mut m = BTreeMap::new();
            for &v in raw {
                m.entry(v).or_insert(0);
            }
            m.into_keys().enumerate().map(|(i, k)| (k, i)).collect()
        };
        Self::new(rows, cols, raw.iter().map(|v| ids[v]).collect())
    }

    /// One region covering the whole grid.
    pub fn single(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0; rows * cols]).expect("non-empty grid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn region_count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }
}

/// Bounding box of a region: top-left corner plus height and width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    /// `height x width` occupancy, row-major within the box.
    pub mask: Vec<bool>,
}

impl Region {
    fn from_pixels(id: usize, pixels: Vec<(usize, usize)>) -> Self {
        let row0 = pixels.iter().map(|p| p.0).min().expect("non-empty region");
        let row1 = pixels.iter().map(|p| p.0).max().unwrap();
        let col0 = pixels.iter().map(|p| p.1).min().unwrap();
        let col1 = pixels.iter().map(|p| p.1).max().unwrap();
        let bbox = BoundingBox {
            row0,
            col0,
            height: row1 - row0 + 1,
            width: col1 - col0 + 1,
        };
        let mut mask = vec![false; bbox.height * bbox.width];
        for &(r, c) in &pixels {
            mask[(r - row0) * bbox.width + (c - col0)] = true;
        }
        Self {
            id,
            pixels,
            bbox,
            mask,
        }
    }

    pub fn occupied(&self, local_row: usize, local_col: usize) -> bool {
        self.mask[local_row * self.bbox.width + local_col]
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Pixel coordinates relative to the bounding box.
    pub fn local_pixels(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.pixels
            .iter()
            .map(move |&(r, c)| (r, c, r - self.bbox.row0, c - self.bbox.col0))
    }

    /// Zero cube with the block shape of this region.
    pub fn zero_block(&self, bands: usize) -> Cube {
        Cube::zeros(self.bbox.height, self.bbox.width, bands)
    }
}

/// A region's bounding-box block: region cells plus complement cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBlock {
    pub region_id: usize,
    pub block: Cube,
}

/// One region per id, ascending; pixels in row-major order.
pub fn regions_from_labels(lm: &LabelMap) -> Result<Vec<Region>> {
    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lm.region_count()];
    for r in 0..lm.rows {
        for c in 0..lm.cols {
            pixels[lm.get(r, c)].push((r, c));
        }
    }
    if let Some(missing) = pixels.iter().position(|p| p.is_empty()) {
        return Err(Error::MalformedLabels(format!("region id {missing} is missing")));
    }
    Ok(pixels
        .into_iter()
        .enumerate()
        .map(|(id, px)| Region::from_pixels(id, px))
        .collect())
}

fn check_block(region: &Region, block: &Cube, bands: usize, what: &str) -> Result<()> {
    let want = (region.bbox.height, region.bbox.width, bands);
    if block.dims() != want {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {:?}, region {} needs {want:?}",
            block.dims(),
            region.id
        )));
    }
    Ok(())
}

fn check_bounds(region: &Region, c: &Cube) -> Result<()> {
    let b = &region.bbox;
    if b.row0 + b.height > c.rows() || b.col0 + b.width > c.cols() {
        return Err(Error::DimensionMismatch(format!(
            "region {} exceeds the {}x{} grid",
            region.id,
            c.rows(),
            c.cols()
        )));
    }
    Ok(())
}

/// Packs the region's cells of `c` together with `complement` into one block.
pub fn extract(c: &Cube, region: &Region, complement: &Cube) -> Result<PaddedBlock> {
    check_bounds(region, c)?;
    check_block(region, complement, c.bands(), "complement")?;
    let mut block = complement.clone();
    for (r, col, lr, lc) in region.local_pixels() {
        block.tube_mut(lr, lc).copy_from_slice(c.tube(r, col));
    }
    Ok(PaddedBlock {
        region_id: region.id,
        block,
    })
}

/// Writes the region's cells of `b` into `target` and returns the complement
/// cells as a block whose region cells are zero.
pub fn scatter(b: &PaddedBlock, region: &Region, target: &mut Cube) -> Result<Cube> {
    if b.region_id != region.id {
        return Err(Error::DimensionMismatch(format!(
            "block of region {} scattered as region {}",
            b.region_id, region.id
        )));
    }
    check_bounds(region, target)?;
    check_block(region, &b.block, target.bands(), "block")?;
    let mut complement = b.block.clone();
    for (r, col, lr, lc) in region.local_pixels() {
        target.tube_mut(r, col).copy_from_slice(b.block.tube(lr, lc));
        complement.tube_mut(lr, lc).fill(0.0);
    }
    Ok(complement)
}

/// Sparsity weight `alpha / sqrt(max(height, width) * bands)` for a region.
pub fn lambda_for(region: &Region, alpha: f64, bands: usize) -> f64 {
    let side = region.bbox.height.max(region.bbox.width);
    alpha / ((side * bands) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(rows: usize, cols: usize, v: &[usize]) -> LabelMap {
        LabelMap::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn two_horizontal_bands() {
        let regions = regions_from_labels(&lm(2, 2, &[0, 0, 1, 1])).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(
            regions[0].bbox,
            BoundingBox { row0: 0, col0: 0, height: 1, width: 2 }
        );
        assert_eq!(
            regions[1].bbox,
            BoundingBox { row0: 1, col0: 0, height: 1, width: 2 }
        );
        assert!(regions.iter().all(|r| r.is_full()));
    }

    #[test]
    fn single_pixel() {
        let regions = regions_from_labels(&lm(1, 1, &[0])).unwrap();
        assert_eq!(
            regions[0].bbox,
            BoundingBox { row0: 0, col0: 0, height: 1, width: 1 }
        );
    }

    #[test]
    fn diagonal_regions_share_bbox() {
        let regions = regions_from_labels(&lm(2, 2, &[0, 1, 1, 0])).unwrap();
        for r in &regions {
            assert_eq!(r.bbox, BoundingBox { row0: 0, col0: 0, height: 2, width: 2 });
            assert_eq!(r.mask.iter().filter(|&&m| m).count(), 2);
        }
        assert_eq!(regions[0].mask, vec![true, false, false, true]);
        assert_eq!(regions[1].mask, vec![false, true, true, false]);
    }

    #[test]
    fn missing_id_is_rejected() {
        assert!(matches!(
            LabelMap::new(1, 2, vec![0, 2]),
            Err(Error::MalformedLabels(_))
        ));
    }

    #[test]
    fn compaction_preserves_grouping() {
        let m = LabelMap::compacted(2, 2, &[7u32, 3, 3, 7]).unwrap();
        assert_eq!(m.as_slice(), &[1, 0, 0, 1]);
    }

    #[test]
    fn disconnected_label_is_one_region() {
        let regions = regions_from_labels(&lm(1, 3, &[0, 1, 0])).unwrap();
        assert_eq!(regions[0].pixels, vec![(0, 0), (0, 2)]);
        assert_eq!(regions[0].bbox.width, 3);
    }

    #[test]
    fn full_region_extract_is_crop() {
        let c = Cube::from_fn(3, 3, 2, |r, col, b| (r * 6 + col * 2 + b) as f64);
        let lm = lm(3, 3, &[0, 0, 1, 0, 0, 1, 1, 1, 1]);
        let regions = regions_from_labels(&lm).unwrap();
        let r0 = &regions[0];
        let comp = Cube::filled(2, 2, 2, 99.0);
        let block = extract(&c, r0, &comp).unwrap();
        let crop = Cube::from_fn(2, 2, 2, |r, col, b| c.get(r, col, b));
        assert_eq!(block.block, crop);
    }

    #[test]
    fn zero_complement_gives_masked_crop() {
        let c = Cube::filled(2, 2, 1, 5.0);
        let regions = regions_from_labels(&lm(2, 2, &[0, 1, 1, 0])).unwrap();
        let b = extract(&c, &regions[0], &regions[0].zero_block(1)).unwrap();
        assert_eq!(b.block.as_slice(), &[5.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn scatter_full_region_has_empty_complement() {
        let c = Cube::filled(2, 2, 3, 1.5);
        let regions = regions_from_labels(&LabelMap::single(2, 2)).unwrap();
        let b = extract(&c, &regions[0], &regions[0].zero_block(3)).unwrap();
        let mut target = Cube::zeros(2, 2, 3);
        let comp = scatter(&b, &regions[0], &mut target).unwrap();
        assert_eq!(target, c);
        assert!(comp.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_then_extract_reproduces_block() {
        let regions = regions_from_labels(&lm(2, 3, &[0, 1, 1, 0, 0, 1])).unwrap();
        let r = &regions[1];
        let block = PaddedBlock {
            region_id: 1,
            block: Cube::from_fn(2, 2, 2, |a, b, c| (a * 4 + b * 2 + c) as f64 + 1.0),
        };
        let mut target = Cube::zeros(2, 3, 2);
        let comp = scatter(&block, r, &mut target).unwrap();
        assert_eq!(extract(&target, r, &comp).unwrap(), block);
    }

    #[test]
    fn dimension_mismatches() {
        let regions = regions_from_labels(&LabelMap::single(2, 2)).unwrap();
        let c = Cube::zeros(2, 2, 3);
        assert!(extract(&c, &regions[0], &Cube::zeros(2, 2, 2)).is_err());
        let b = PaddedBlock { region_id: 0, block: Cube::zeros(1, 2, 3) };
        assert!(scatter(&b, &regions[0], &mut c.clone()).is_err());
        let small = Cube::zeros(1, 1, 3);
        assert!(extract(&small, &regions[0], &Cube::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn lambda_examples() {
        let regions = regions_from_labels(&LabelMap::single(1, 1)).unwrap();
        assert_eq!(lambda_for(&regions[0], 1.0, 1), 1.0);
        let wide = Region::from_pixels(0, (0..20).flat_map(|r| (0..10).map(move |c| (r, c))).collect());
        let l = lambda_for(&wide, 1e-7, 200);
        assert!((l - 1e-7 / 4000f64.sqrt()).abs() <= 1e-15 * l);
        assert!((l - 1.5811e-9).abs() < 1e-13);
        assert_eq!(lambda_for(&wide, 2e-7, 200), 2.0 * l);
    }
}
