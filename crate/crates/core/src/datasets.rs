//! Labelled datasets, synthetic generators and preprocessing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

pub mod idx;

pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        })
    }

    /// First `n` rows (or all of them).
    pub fn truncate(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorToyConfig {
    pub n_samples: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for XorToyConfig {
    fn default() -> Self {
        XorToyConfig {
            n_samples: 500,
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// Cluster centres of the XOR toy and their labels (XOR of the sign bits).
pub const XOR_CENTERS: [([f64; 2], usize); 4] = [
    ([1.0, 1.0], 0),
    ([-1.0, -1.0], 0),
    ([1.0, -1.0], 1),
    ([-1.0, 1.0], 1),
];

/// Four Gaussian clusters at `(±1, ±1)`; sample `i` comes from cluster
/// `i mod 4`, so the two classes are balanced to within one sample.
pub fn gen_xor(cfg: &XorToyConfig) -> Result<Dataset> {
    if cfg.n_samples < 4 {
        return Err(Error::InvalidArgument(format!(
            "XOR toy needs at least 4 samples, got {}",
            cfg.n_samples
        )));
    }
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut features = Vec::with_capacity(cfg.n_samples * 2);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let (center, label) = XOR_CENTERS[i % 4];
        for c in center {
            features.push(rng.normal(c, cfg.noise_sd)?);
        }
        labels.push(label);
    }
    Dataset::new(Matrix::from_vec(cfg.n_samples, 2, features)?, labels, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobOodConfig {
    pub in_centers: Vec<[f64; 2]>,
    /// Distance from each OOD cluster centre to the nearest in-distribution centre.
    pub ood_shift: f64,
    pub per_class: usize,
    pub sd: f64,
    pub seed: u64,
    /// Number of OOD samples; defaults to `per_class` when absent.
    #[serde(default)]
    pub ood_count: Option<usize>,
}

impl Default for BlobOodConfig {
    fn default() -> Self {
        // Equilateral triangle of radius 2.5: neighbouring classes overlap a
        // little, so classifiers make some mistakes.
        let r = 2.5;
        let in_centers = (0..3)
            .map(|k| {
                let angle = PI / 2.0 + 2.0 * PI * k as f64 / 3.0;
                [r * angle.cos(), r * angle.sin()]
            })
            .collect();
        BlobOodConfig {
            in_centers,
            ood_shift: 10.0,
            per_class: 200,
            sd: 1.0,
            seed: 0,
            ood_count: None,
        }
    }
}

/// Smallest `t ≥ 0` with `|origin + t·dir - c| ≥ shift` for every centre `c`.
fn clearance(origin: [f64; 2], dir: [f64; 2], centers: &[[f64; 2]], shift: f64) -> f64 {
    centers
        .iter()
        .map(|c| {
            let off = [origin[0] - c[0], origin[1] - c[1]];
            let b = dir[0] * off[0] + dir[1] * off[1];
            let c0 = off[0] * off[0] + off[1] * off[1] - shift * shift;
            let disc = b * b - c0;
            if disc <= 0.0 {
                0.0
            } else {
                (-b + disc.sqrt()).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Gaussian class clusters plus an out-of-distribution set.
///
/// Each OOD sample picks a uniformly random direction from the centroid of
/// the in-distribution centres, walks out until the nearest in-centre is
/// exactly `ood_shift` away, and adds the same isotropic noise `sd`. The OOD
/// set therefore rings the training data at a fixed clearance.
pub fn gen_blobs_ood(cfg: &BlobOodConfig) -> Result<(Dataset, Matrix)> {
    if cfg.in_centers.len() < 2 {
        return Err(Error::InvalidArgument(
            "blob OOD task needs at least two in-distribution centres".into(),
        ));
    }
    if !(cfg.ood_shift > 0.0 && cfg.ood_shift.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ood_shift must be positive, got {}",
            cfg.ood_shift
        )));
    }
    let mut rng = RngStream::new(cfg.seed, 0);
    let k = cfg.in_centers.len();
    let mut features = Vec::with_capacity(k * cfg.per_class * 2);
    let mut labels = Vec::with_capacity(k * cfg.per_class);
    for i in 0..k * cfg.per_class {
        let class = i % k;
        let c = cfg.in_centers[class];
        features.push(rng.normal(c[0], cfg.sd)?);
        features.push(rng.normal(c[1], cfg.sd)?);
        labels.push(class);
    }
    let in_dist = Dataset::new(Matrix::from_vec(k * cfg.per_class, 2, features)?, labels, k)?;

    let centroid = {
        let (sx, sy) = cfg
            .in_centers
            .iter()
            .fold((0.0, 0.0), |(x, y), c| (x + c[0], y + c[1]));
        [sx / k as f64, sy / k as f64]
    };
    let n_ood = cfg.ood_count.unwrap_or(cfg.per_class);
    let mut ood = Vec::with_capacity(n_ood * 2);
    let mut ood_rng = RngStream::new(cfg.seed, 1);
    for _ in 0..n_ood {
        let angle = ood_rng.uniform(0.0, 2.0 * PI)?;
        let dir = [angle.cos(), angle.sin()];
        let t = clearance(centroid, dir, &cfg.in_centers, cfg.ood_shift);
        ood.push(ood_rng.normal(centroid[0] + t * dir[0], cfg.sd)?);
        ood.push(ood_rng.normal(centroid[1] + t * dir[1], cfg.sd)?);
    }
    Ok((in_dist, Matrix::from_vec(n_ood, 2, ood)?))
}

/// `x ↦ 1 - x` on features scaled to `[0, 1]`.
pub fn negate_images(d: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        features: negate_features(&d.features)?,
        labels: d.labels.clone(),
        n_classes: d.n_classes,
    })
}

pub fn negate_features(m: &Matrix) -> Result<Matrix> {
    if m.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Data("negation needs features in [0, 1]".into()));
    }
    Ok(m.map(|v| 1.0 - v))
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Shuffled train/validation/test partition.
///
/// Split sizes are `round(f·n)` for train and validation; test takes the rest.
pub fn split(d: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let n = d.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Data(format!(
            "split {fractions:?} of {n} rows leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed, 0).shuffle(&mut order);
    Ok(Splits {
        train: d.subset(&order[..n_train])?,
        val: d.subset(&order[n_train..n_train + n_val])?,
        test: d.subset(&order[n_train + n_val..])?,
    })
}

/// Moves the listed classes out into an unlabelled OOD set and re-indexes the
/// remaining labels densely, preserving their order.
pub fn holdout_class_ood(d: &Dataset, held_classes: &[usize]) -> Result<(Dataset, Matrix)> {
    if held_classes.is_empty() {
        return Err(Error::InvalidArgument("no classes to hold out".into()));
    }
    let mut remap = vec![None; d.n_classes];
    let mut next = 0;
    for (c, slot) in remap.iter_mut().enumerate() {
        if !held_classes.contains(&c) {
            *slot = Some(next);
            next += 1;
        }
    }
    if next == 0 {
        return Err(Error::InvalidArgument(
            "holding out every class leaves no in-distribution data".into(),
        ));
    }
    if let Some(&bad) = held_classes.iter().find(|&&c| c >= d.n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes: d.n_classes,
        });
    }
    let (mut keep, mut drop) = (Vec::new(), Vec::new());
    let mut labels = Vec::new();
    for (i, &l) in d.labels.iter().enumerate() {
        match remap[l] {
            Some(m) => {
                keep.push(i);
                labels.push(m);
            }
            None => drop.push(i),
        }
    }
    let in_dist = Dataset::new(d.features.select_rows(&keep)?, labels, next)?;
    Ok((in_dist, d.features.select_rows(&drop)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_noise_free_is_four_points() {
        let d = gen_xor(&XorToyConfig {
            n_samples: 40,
            noise_sd: 0.0,
            seed: 1,
        })
        .unwrap();
        for (row, &l) in d.features().row_iter().zip(d.labels()) {
            assert_eq!(row[0].abs(), 1.0);
            assert_eq!(row[1].abs(), 1.0);
            assert_eq!(l, usize::from(row[0] * row[1] < 0.0));
        }
    }

    #[test]
    fn xor_balanced_and_deterministic() {
        let cfg = XorToyConfig {
            n_samples: 500,
            noise_sd: 0.3,
            seed: 4,
        };
        let d = gen_xor(&cfg).unwrap();
        assert_eq!(d.class_counts(), vec![250, 250]);
        assert_eq!(d, gen_xor(&cfg).unwrap());
        let odd = gen_xor(&XorToyConfig {
            n_samples: 7,
            ..cfg.clone()
        })
        .unwrap();
        let counts = odd.class_counts();
        assert!(counts[0].abs_diff(counts[1]) <= 1);
        assert!(gen_xor(&XorToyConfig { n_samples: 3, ..cfg }).is_err());
    }

    #[test]
    fn xor_overlap_grows_with_noise() {
        let overlap = |noise_sd: f64| {
            let d = gen_xor(&XorToyConfig {
                n_samples: 4000,
                noise_sd,
                seed: 2,
            })
            .unwrap();
            let wrong = d
                .features()
                .row_iter()
                .zip(d.labels())
                .filter(|(r, &l)| {
                    let nearest = XOR_CENTERS
                        .iter()
                        .min_by(|a, b| {
                            let da = (r[0] - a.0[0]).powi(2) + (r[1] - a.0[1]).powi(2);
                            let db = (r[0] - b.0[0]).powi(2) + (r[1] - b.0[1]).powi(2);
                            da.total_cmp(&db)
                        })
                        .unwrap();
                    nearest.1 != l
                })
                .count();
            wrong as f64 / d.len() as f64
        };
        let fractions: Vec<f64> = [0.0, 0.1, 0.3, 0.5].iter().map(|&s| overlap(s)).collect();
        assert_eq!(fractions[0], 0.0);
        assert!(fractions.windows(2).all(|w| w[0] <= w[1]), "{fractions:?}");
        assert!(fractions[3] > fractions[1]);
    }

    #[test]
    fn blobs_shapes_and_clearance() {
        let cfg = BlobOodConfig {
            in_centers: vec![[-2.0, 0.0], [2.0, 0.0]],
            ood_shift: 10.0,
            per_class: 100,
            sd: 1.0,
            seed: 3,
            ood_count: Some(2000),
        };
        let (in_dist, ood) = gen_blobs_ood(&cfg).unwrap();
        assert_eq!(in_dist.len(), 200);
        assert_eq!(in_dist.class_counts(), vec![100, 100]);
        assert_eq!(ood.rows(), 2000);
        let far = ood
            .row_iter()
            .filter(|r| {
                cfg.in_centers
                    .iter()
                    .all(|c| ((r[0] - c[0]).powi(2) + (r[1] - c[1]).powi(2)).sqrt() > 5.0 * cfg.sd)
            })
            .count();
        assert!(far as f64 / 2000.0 > 0.999);
        assert_eq!(gen_blobs_ood(&cfg).unwrap().1, ood);
    }

    #[test]
    fn blobs_reject_bad_config() {
        let mut cfg = BlobOodConfig {
            ood_shift: 0.0,
            ..BlobOodConfig::default()
        };
        assert!(gen_blobs_ood(&cfg).is_err());
        cfg.ood_shift = 5.0;
        cfg.in_centers.truncate(1);
        assert!(gen_blobs_ood(&cfg).is_err());
    }

    #[test]
    fn clearance_hits_exact_distance() {
        let centers = [[0.0, 3.0], [-2.6, -1.5], [2.6, -1.5]];
        for k in 0..16 {
            let a = 2.0 * PI * k as f64 / 16.0;
            let dir = [a.cos(), a.sin()];
            let t = clearance([0.0, 0.0], dir, &centers, 10.0);
            let min = centers
                .iter()
                .map(|c| ((t * dir[0] - c[0]).powi(2) + (t * dir[1] - c[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!((min - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn negation() {
        let d = Dataset::new(Matrix::zeros(2, 3), vec![0, 1], 2).unwrap();
        let n = negate_images(&d).unwrap();
        assert!(n.features().as_slice().iter().all(|&v| v == 1.0));

        let m = Matrix::from_rows(&[[0.25, 0.5, 0.125], [1.0, 0.0, 0.75]]).unwrap();
        let d = Dataset::new(m, vec![0, 0], 1).unwrap();
        let twice = negate_images(&negate_images(&d).unwrap()).unwrap();
        assert_eq!(twice, d);
        let mean = |d: &Dataset| d.features().sum() / 6.0;
        assert!((mean(&negate_images(&d).unwrap()) - (1.0 - mean(&d))).abs() < 1e-15);

        let bad = Dataset::new(Matrix::filled(1, 1, 1.5).unwrap(), vec![0], 1).unwrap();
        assert!(negate_images(&bad).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let m = Matrix::from_vec(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let d = Dataset::new(m, (0..100).map(|i| i % 3).collect(), 3).unwrap();
        let s = split(&d, [0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let mut all: Vec<i64> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|p| p.features().as_slice().iter().map(|&v| v as i64))
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let again = split(&d, [0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!(again.test, s.test);
        assert!(split(&d, [0.5, 0.5, 0.0], 5).is_err());
        assert!(split(&d, [0.8, 0.1, 0.2], 5).is_err());
    }

    #[test]
    fn holdout_classes() {
        let m = Matrix::from_vec(20, 1, (0..20).map(f64::from).collect()).unwrap();
        let d = Dataset::new(m, (0..20).map(|i| i % 10).collect(), 10).unwrap();
        let (in_dist, ood) = holdout_class_ood(&d, &[5, 6, 7, 8, 9]).unwrap();
        assert_eq!(in_dist.n_classes(), 5);
        assert_eq!(in_dist.len() + ood.rows(), d.len());
        assert!(in_dist.features().as_slice().iter().all(|&v| (v as usize) % 10 < 5));
        assert!(ood.as_slice().iter().all(|&v| (v as usize) % 10 >= 5));

        let (in_dist, _) = holdout_class_ood(&d, &[0, 2]).unwrap();
        assert_eq!(in_dist.labels()[..3], [0, 1, 2]);
        assert_eq!(in_dist.features().as_slice()[..3], [1.0, 3.0, 4.0]);

        let all: Vec<usize> = (0..10).collect();
        assert!(holdout_class_ood(&d, &all).is_err());
        assert!(holdout_class_ood(&d, &[]).is_err());
    }
}
