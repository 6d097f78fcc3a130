//! Synthetic scenes, nearest-neighbour classification and accuracy metrics.

use crate::error::{Error, Result};
use crate::regions::LabelMap;
use crate::tensor::Cube;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-pixel class ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGrid {
    pub rows: usize,
    pub cols: usize,
    pub classes: Vec<usize>,
}

impl ClassGrid {
    pub fn new(rows: usize, cols: usize, classes: Vec<usize>) -> Result<Self> {
        if rows * cols != classes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} grid needs {} classes, got {}",
                rows * cols,
                classes.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            classes,
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.iter().max().map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    /// One unit-norm spectrum per material.
    pub signatures: Vec<Vec<f64>>,
    /// Region id per pixel; every region holds a single material.
    pub cells: Vec<usize>,
    /// Material of every region id in `cells`.
    pub cell_material: Vec<usize>,
    pub corruption_rate: f64,
    pub corruption_magnitude: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Random scene: `materials` non-negative unit signatures and `cells`
    /// irregular regions from a Voronoi partition with jittered distances.
    /// Materials are dealt to regions round-robin so each appears.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        rows: usize,
        cols: usize,
        bands: usize,
        materials: usize,
        cells: usize,
        corruption_rate: f64,
        corruption_magnitude: f64,
        seed: u64,
    ) -> Result<Self> {
        if materials == 0 || cells < materials || cells > rows * cols {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= materials ({materials}) <= cells ({cells}) <= pixels ({})",
                rows * cols
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signatures: Vec<Vec<f64>> = (0..materials)
            .map(|_| {
                let raw: Vec<f64> = (0..bands)
                    .map(|_| rng.sample::<f64, _>(StandardNormal).abs() + 0.05)
                    .collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                raw.into_iter().map(|v| v / norm).collect()
            })
            .collect();

        // distinct seed pixels so every cell owns at least its seed
        let seeds: Vec<(f64, f64, f64)> = sample(&mut rng, rows * cols, cells)
            .into_iter()
            .map(|i| {
                let w = rng.random_range(0.7..1.3);
                ((i / cols) as f64, (i % cols) as f64, w)
            })
            .collect();
        // each seed owns its own pixel (distance zero), so no cell is empty
        let mut cell_of = vec![0usize; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let mut best = (0, f64::INFINITY);
                for (k, &(sr, sc, w)) in seeds.iter().enumerate() {
                    let d = ((r as f64 - sr).powi(2) + (c as f64 - sc).powi(2)).sqrt() * w;
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                cell_of[r * cols + c] = best.0;
            }
        }
        let cell_material = (0..cells).map(|k| k % materials).collect();
        Ok(Self {
            rows,
            cols,
            bands,
            signatures,
            cells: cell_of,
            cell_material,
            corruption_rate,
            corruption_magnitude,
            seed,
        })
    }

    pub fn materials(&self) -> usize {
        self.signatures.len()
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::InvalidParameter(format!(
                "corruption rate {} outside [0, 1]",
                self.corruption_rate
            )));
        }
        if !self.corruption_magnitude.is_finite() {
            return Err(Error::InvalidParameter("corruption magnitude must be finite".into()));
        }
        if self.signatures.iter().any(|s| s.len() != self.bands) {
            return Err(Error::DimensionMismatch("signature length differs from bands".into()));
        }
        for i in 0..self.signatures.len() {
            for j in i + 1..self.signatures.len() {
                if self.signatures[i] == self.signatures[j] {
                    return Err(Error::InvalidParameter(format!(
                        "materials {i} and {j} share a signature"
                    )));
                }
            }
        }
        if self.cells.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch("cell map does not cover the grid".into()));
        }
        if self.cells.iter().any(|&c| c >= self.cell_material.len())
            || self.cell_material.iter().any(|&m| m >= self.materials())
        {
            return Err(Error::InvalidParameter("cell or material id out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub observed: Cube,
    pub clean: Cube,
    pub truth: ClassGrid,
    /// The generating regions, usable as an exact segmentation.
    pub regions: LabelMap,
    pub corrupted_entries: usize,
}

/// Renders a scene: every clean pixel is its material's signature, and
/// `round(rate * entries)` distinct entries get `+-magnitude` added.
pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (rows, cols, bands) = (spec.rows, spec.cols, spec.bands);
    let classes: Vec<usize> = spec.cells.iter().map(|&c| spec.cell_material[c]).collect();
    let clean = Cube::from_fn(rows, cols, bands, |r, c, b| {
        spec.signatures[classes[r * cols + c]][b]
    });
    let total = clean.len();
    let count = (spec.corruption_rate * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut data = clean.as_slice().to_vec();
    for i in sample(&mut rng, total, count.min(total)).into_vec() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        data[i] += sign * spec.corruption_magnitude;
    }
    Ok(Scene {
        observed: Cube::new(rows, cols, bands, data)?,
        clean,
        truth: ClassGrid::new(rows, cols, classes)?,
        regions: LabelMap::new(rows, cols, spec.cells.clone())?,
        corrupted_entries: count.min(total),
    })
}

/// Stratified training mask: `max(1, round(fraction * n_c))` pixels per class.
pub fn stratified_train_mask(truth: &ClassGrid, fraction: f64, rng: &mut impl Rng) -> Vec<bool> {
    let mut mask = vec![false; truth.len()];
    for class in 0..truth.class_count() {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth.classes[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        for k in sample(rng, members.len(), take).into_iter() {
            mask[members[k]] = true;
        }
    }
    mask
}

/// 1-nearest-neighbour labels; training pixels keep their own class.
/// Ties go to the lowest class id.
pub fn knn_classify(features: &Cube, train_mask: &[bool], truth: &ClassGrid) -> Result<ClassGrid> {
    let pixels = features.rows() * features.cols();
    if (features.rows(), features.cols()) != (truth.rows, truth.cols) || train_mask.len() != pixels {
        return Err(Error::DimensionMismatch("features, mask and truth disagree".into()));
    }
    let k = truth.class_count();
    let mut has_train = vec![false; k];
    let mut present = vec![false; k];
    for (i, &c) in truth.classes.iter().enumerate() {
        present[c] = true;
        has_train[c] |= train_mask[i];
    }
    if let Some(class) = (0..k).find(|&c| present[c] && !has_train[c]) {
        return Err(Error::EmptyClass { class });
    }
    let bands = features.bands();
    let spectrum = |i: usize| &features.as_slice()[i * bands..(i + 1) * bands];
    let train: Vec<usize> = (0..pixels).filter(|&i| train_mask[i]).collect();
    let classes = (0..pixels)
        .map(|i| {
            if train_mask[i] {
                return truth.classes[i];
            }
            let x = spectrum(i);
            let mut best_per_class = vec![f64::INFINITY; k];
            for &t in &train {
                let d: f64 = x.iter().zip(spectrum(t)).map(|(a, b)| (a - b) * (a - b)).sum();
                let c = truth.classes[t];
                if d < best_per_class[c] {
                    best_per_class[c] = d;
                }
            }
            let mut best = 0;
            for c in 1..k {
                if best_per_class[c] < best_per_class[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    ClassGrid::new(truth.rows, truth.cols, classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

impl Metrics {
    /// OA, AA (mean recall over classes with test samples) and Cohen's kappa.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let k = confusion.len();
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Self {
                confusion,
                oa: 0.0,
                aa: 0.0,
                kappa: 0.0,
            };
        }
        let n = total as f64;
        let diag: usize = (0..k).map(|i| confusion[i][i]).sum();
        let oa = diag as f64 / n;
        let recalls: Vec<f64> = (0..k)
            .filter_map(|i| {
                let row: usize = confusion[i].iter().sum();
                (row > 0).then(|| confusion[i][i] as f64 / row as f64)
            })
            .collect();
        let aa = recalls.iter().sum::<f64>() / recalls.len() as f64;
        let pe: f64 = (0..k)
            .map(|c| {
                let row: usize = confusion[c].iter().sum();
                let col: usize = confusion.iter().map(|r| r[c]).sum();
                row as f64 * col as f64
            })
            .sum::<f64>()
            / (n * n);
        let kappa = if pe >= 1.0 {
            log::warn!("chance agreement is 1; kappa defined as 0");
            0.0
        } else {
            (oa - pe) / (1.0 - pe)
        };
        Self {
            confusion,
            oa,
            aa,
            kappa,
        }
    }
}

pub fn compute_metrics(pred: &ClassGrid, truth: &ClassGrid, test_mask: &[bool]) -> Result<Metrics> {
    if pred.len() != truth.len() || test_mask.len() != truth.len() {
        return Err(Error::DimensionMismatch("prediction, truth and mask disagree".into()));
    }
    let k = truth.class_count().max(pred.class_count());
    let mut confusion = vec![vec![0usize; k]; k];
    for i in 0..truth.len() {
        if test_mask[i] {
            confusion[truth.classes[i]][pred.classes[i]] += 1;
        }
    }
    Ok(Metrics::from_confusion(confusion))
}

/// `||estimate - clean||_F / ||clean||_F`.
pub fn recovery_error(estimate: &Cube, clean: &Cube) -> Result<f64> {
    let denom = clean.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(estimate.sub(clean)?.frobenius_norm() / denom)
}

/// Classification of one feature cube under `repeats` random training masks.
pub fn evaluate_repeats(
    features: &Cube,
    truth: &ClassGrid,
    train_fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Metrics>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..repeats)
        .map(|_| {
            let train = stratified_train_mask(truth, train_fraction, &mut rng);
            let pred = knn_classify(features, &train, truth)?;
            let test: Vec<bool> = train.iter().map(|t| !t).collect();
            compute_metrics(&pred, truth, &test)
        })
        .collect()
}
