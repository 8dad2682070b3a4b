//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{Head, LossConfig};
use crate::layers::Activation;
use crate::network::{NetworkSpec, TrainConfig};
use crate::optim::OptimizerConfig;
use crate::uncertainty::UncertaintyMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Is,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub widths: Vec<usize>,
    /// Hidden-layer activation before the penultimate layer.
    pub activation: Activation,
    pub penultimate: Activation,
    /// Head used by `train`; the experiment methods choose their own heads.
    pub head: HeadKind,
    pub a: f64,
    /// Dropout rate of the MC-dropout baseline.
    pub dropout: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            widths: vec![2, 64, 3],
            activation: Activation::Relu,
            penultimate: Activation::Cauchy,
            head: HeadKind::Is,
            a: 1.0,
            dropout: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda: f64,
    pub weight_decay: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let d = LossConfig::default();
        LossSection {
            lambda: d.evidence_lambda,
            weight_decay: d.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adadelta,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Defaults to 1.0 for Adadelta and 0.01 for SGD.
    pub lr: Option<f64>,
    pub momentum: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 40,
            batch_size: 64,
            optimizer: OptimizerKind::Adadelta,
            lr: None,
            momentum: 0.9,
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// XOR toy; no OOD source.
    Xor,
    /// Gaussian class blobs ringed by an OOD set.
    Blobs,
    /// IDX files: train images, train labels, test images, test labels and
    /// optionally an OOD image file.
    Idx,
    /// IDX files with `held_out` classes moved into the OOD set.
    IdxHoldout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    pub paths: Vec<PathBuf>,
    pub seed: u64,
    pub noise_sd: f64,
    pub n_samples: usize,
    pub per_class: usize,
    pub sd: f64,
    /// Blob OOD clearance in units of `sd`.
    pub ood_shift: f64,
    pub held_out: Vec<usize>,
    /// Use the in-distribution test set as the OOD set (a null experiment).
    pub ood_same_as_test: bool,
    /// Keep only the first `n` training rows.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: DataKind::Blobs,
            paths: Vec::new(),
            seed: 0,
            noise_sd: 0.0,
            n_samples: 500,
            per_class: 200,
            sd: 1.0,
            ood_shift: 10.0,
            held_out: vec![5, 6, 7, 8, 9],
            ood_same_as_test: false,
            train_limit: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    pub resolution: usize,
    pub range: [f64; 2],
    pub bins: usize,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        HeatmapSection {
            resolution: 100,
            range: [-2.5, 2.5],
            bins: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub mc_passes: usize,
    pub ensemble_members: usize,
    pub out_dir: PathBuf,
    pub heatmap: HeatmapSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkSection::default(),
            loss: LossSection::default(),
            train: TrainSection::default(),
            data: DataSection::default(),
            methods: ["is", "base", "basee", "mcd", "de"].map(String::from).to_vec(),
            seeds: vec![0, 1, 2],
            mc_passes: 50,
            ensemble_members: 5,
            out_dir: PathBuf::from("out"),
            heatmap: HeatmapSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative data paths are resolved against the config file.
        if let Some(dir) = path.parent() {
            for p in &mut cfg.data.paths {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// XOR toy defaults: 4×100 hidden units, 500 samples, full-batch
    /// training for 40 epochs.
    pub fn xor_default() -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.network.widths = vec![2, 100, 100, 100, 100, 2];
        cfg.train.batch_size = 500;
        cfg.data.kind = DataKind::Xor;
        cfg.methods = vec!["is".into()];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        for m in self.uncertainty_methods()? {
            m.validate()?;
        }
        self.is_spec().validate()?;
        self.baseline_spec().validate()?;
        self.train_config(0).validate()?;
        if self.heatmap.resolution < 2 {
            return Err(Error::Config("heatmap resolution must be at least 2".into()));
        }
        if self.heatmap.range[0].partial_cmp(&self.heatmap.range[1]) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config("heatmap range must be increasing".into()));
        }
        Ok(())
    }

    pub fn uncertainty_methods(&self) -> Result<Vec<UncertaintyMethod>> {
        self.methods
            .iter()
            .map(|name| {
                Ok(match UncertaintyMethod::parse(name)? {
                    UncertaintyMethod::McDropout { .. } => UncertaintyMethod::McDropout {
                        passes: self.mc_passes,
                    },
                    UncertaintyMethod::DeepEnsemble { .. } => UncertaintyMethod::DeepEnsemble {
                        members: self.ensemble_members,
                    },
                    m => m,
                })
            })
            .collect()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            evidence_lambda: self.loss.lambda,
            weight_decay: self.loss.weight_decay,
        }
    }

    /// Inhibited Softmax network for the `is` method.
    pub fn is_spec(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::inhibited(
            self.network.widths.clone(),
            self.network.penultimate,
            self.network.a,
            self.loss_config(),
        );
        spec.hidden_activation = self.network.activation;
        spec
    }

    /// Softmax ReLU network shared by the baselines.
    pub fn baseline_spec(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::softmax(self.network.widths.clone());
        spec.loss.weight_decay = self.loss.weight_decay;
        spec
    }

    pub fn mc_dropout_spec(&self) -> NetworkSpec {
        let mut spec = self.baseline_spec();
        spec.dropout_rate = self.network.dropout;
        spec
    }

    /// Network trained by the `train` command, following `network.head`.
    pub fn train_spec(&self) -> NetworkSpec {
        match self.network.head {
            HeadKind::Is => self.is_spec(),
            HeadKind::Softmax => {
                let mut spec = self.baseline_spec();
                spec.hidden_activation = self.network.activation;
                spec.penultimate_activation = self.network.penultimate;
                spec.loss.evidence_lambda = self.loss.lambda;
                spec
            }
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        match self.train.optimizer {
            OptimizerKind::Adadelta => OptimizerConfig::Adadelta {
                lr: self.train.lr.unwrap_or(1.0),
                rho: self.train.rho,
                eps: self.train.eps,
            },
            OptimizerKind::Sgd => OptimizerConfig::Sgd {
                lr: self.train.lr.unwrap_or(0.01),
                momentum: self.train.momentum,
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            shuffle: true,
            optimizer: self.optimizer(),
        }
    }

    pub fn head(&self) -> Head {
        self.is_spec().head
    }
}
