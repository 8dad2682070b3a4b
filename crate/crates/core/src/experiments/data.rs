//! Data sources selected by the `data` config section.

use crate::datasets::{gen_blobs_ood, gen_xor, holdout_class_ood, idx, BlobOodConfig, Dataset, XorToyConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::config::{DataKind, DataSection};

/// Train/test data plus an optional OOD set. Training code only ever sees
/// `train`.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Option<Matrix>,
}

impl ExperimentData {
    pub fn require_ood(&self) -> Result<&Matrix> {
        self.ood
            .as_ref()
            .ok_or_else(|| Error::Data("this data source has no out-of-distribution set".into()))
    }
}

fn blob_config(d: &DataSection, seed: u64) -> BlobOodConfig {
    BlobOodConfig {
        ood_shift: d.ood_shift * d.sd,
        per_class: d.per_class,
        sd: d.sd,
        seed,
        ..BlobOodConfig::default()
    }
}

fn xor_config(d: &DataSection, seed: u64) -> XorToyConfig {
    XorToyConfig {
        n_samples: d.n_samples,
        noise_sd: d.noise_sd,
        seed,
    }
}

fn paths(d: &DataSection, allowed: &[usize]) -> Result<()> {
    if allowed.contains(&d.paths.len()) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "data kind {:?} takes {:?} paths, got {}",
            d.kind,
            allowed,
            d.paths.len()
        )))
    }
}

/// Synthetic test sets are fresh draws with seed `data.seed + 1`.
pub fn load_data(d: &DataSection) -> Result<ExperimentData> {
    let (train, test, ood) = match d.kind {
        DataKind::Xor => (
            gen_xor(&xor_config(d, d.seed))?,
            gen_xor(&xor_config(d, d.seed.wrapping_add(1)))?,
            None,
        ),
        DataKind::Blobs => {
            let (train, _) = gen_blobs_ood(&blob_config(d, d.seed))?;
            let (test, ood) = gen_blobs_ood(&blob_config(d, d.seed.wrapping_add(1)))?;
            (train, test, Some(ood))
        }
        DataKind::Idx => {
            paths(d, &[4, 5])?;
            let train = idx::load_idx(&d.paths[0], &d.paths[1])?;
            let test = idx::load_idx(&d.paths[2], &d.paths[3])?;
            let ood = d.paths.get(4).map(idx::load_idx_images).transpose()?;
            (train, test, ood)
        }
        DataKind::IdxHoldout => {
            paths(d, &[4])?;
            let train = idx::load_idx(&d.paths[0], &d.paths[1])?;
            let test = idx::load_idx(&d.paths[2], &d.paths[3])?;
            let (train, _) = holdout_class_ood(&train, &d.held_out)?;
            let (test, ood) = holdout_class_ood(&test, &d.held_out)?;
            (train, test, Some(ood))
        }
    };
    if train.n_features() != test.n_features() {
        return Err(Error::Data(format!(
            "train has {} features, test has {}",
            train.n_features(),
            test.n_features()
        )));
    }
    let train = match d.train_limit {
        Some(n) => train.truncate(n)?,
        None => train,
    };
    let test = match d.test_limit {
        Some(n) => test.truncate(n)?,
        None => test,
    };
    let ood = if d.ood_same_as_test {
        Some(test.features().clone())
    } else {
        ood.map(|m| match d.test_limit {
            Some(n) if n < m.rows() => m.select_rows(&(0..n).collect::<Vec<_>>()),
            _ => Ok(m),
        })
        .transpose()?
    };
    if let Some(o) = &ood {
        if o.cols() != train.n_features() {
            return Err(Error::Data(format!(
                "OOD set has {} features, training data has {}",
                o.cols(),
                train.n_features()
            )));
        }
        if o.rows() == 0 {
            return Err(Error::Data("empty OOD set".into()));
        }
    }
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    Ok(ExperimentData { train, test, ood })
}
