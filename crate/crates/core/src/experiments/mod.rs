//! Experiment runners and their CSV reports.
//!
//! Every runner is a pure function of its config: data generation, weight
//! initialisation, shuffling and dropout masks all draw from seeded streams,
//! and seeds run in parallel but are aggregated in config order.

mod config;
mod data;
mod heatmap;
mod report;

use rayon::prelude::*;

pub use config::{
    DataKind, DataSection, ExperimentConfig, HeadKind, HeatmapSection, LossSection, NetworkSection,
    OptimizerKind, TrainSection,
};
pub use data::{load_data, ExperimentData};
pub use heatmap::{run_xor_heatmap, run_xor_heatmap_with_data, GridHeatmap};
pub use report::{ablation_csv, ood_csv, perf_csv, train_csv, wrongpred_csv};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::matrix::Matrix;
use crate::metrics::{accuracy, nll, roc_auc, BinaryScoredSet};
use crate::network::{fit, train_ensemble, Network, TrainedNetwork};
use crate::rng::RngStream;
use crate::uncertainty::{
    mc_dropout_predict, score_entropy, score_is, score_maxprob, score_predictive_entropy, ScoredBatch,
    UncertaintyMethod,
};

// Stream ids within a seed. Ensemble members use streams 0..members.
pub const IS_STREAM: u64 = 10_000;
pub const BASE_STREAM: u64 = 10_001;
pub const MCD_STREAM: u64 = 10_002;
pub const MC_SCORING_STREAM: u64 = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OodResultRow {
    pub method: String,
    pub seed: u64,
    pub roc_auc: f64,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrongPredRow {
    pub method: String,
    pub seed: u64,
    /// `None` when every prediction is right, or every one wrong.
    pub roc_auc: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfRow {
    pub method: String,
    pub seed: u64,
    pub accuracy: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub metric: &'static str,
    pub value: Option<f64>,
}

/// Networks trained for one seed, one slot per model family.
#[derive(Debug, Default)]
pub struct SeedModels {
    pub is: Option<Network>,
    pub base: Option<Network>,
    pub mcd: Option<Network>,
    pub ensemble: Option<Vec<Network>>,
}

fn trained(t: TrainedNetwork) -> Network {
    t.network
}

/// Trains the model families needed by `methods` on `train` only.
pub fn train_models(
    cfg: &ExperimentConfig,
    methods: &[UncertaintyMethod],
    train: &Dataset,
    seed: u64,
) -> Result<SeedModels> {
    let tc = cfg.train_config(seed);
    let mut models = SeedModels::default();
    for m in methods {
        match m {
            UncertaintyMethod::Is if models.is.is_none() => {
                models.is = Some(trained(fit(&cfg.is_spec(), train, &tc, IS_STREAM)?));
            }
            UncertaintyMethod::MaxProb | UncertaintyMethod::Entropy if models.base.is_none() => {
                models.base = Some(trained(fit(&cfg.baseline_spec(), train, &tc, BASE_STREAM)?));
            }
            UncertaintyMethod::McDropout { .. } if models.mcd.is_none() => {
                models.mcd = Some(trained(fit(&cfg.mc_dropout_spec(), train, &tc, MCD_STREAM)?));
            }
            UncertaintyMethod::DeepEnsemble { members } if models.ensemble.is_none() => {
                let nets = train_ensemble(&cfg.baseline_spec(), train, &tc, *members)?;
                models.ensemble = Some(nets.into_iter().map(trained).collect());
            }
            _ => {}
        }
    }
    Ok(models)
}

fn missing(method: UncertaintyMethod) -> Error {
    Error::InvalidArgument(format!("no trained model for method {method}"))
}

/// Scores `x` with `method`. `tag` separates the Monte Carlo dropout streams
/// of different evaluation sets.
pub fn score(
    models: &SeedModels,
    method: UncertaintyMethod,
    x: &Matrix,
    seed: u64,
    tag: u64,
) -> Result<ScoredBatch> {
    match method {
        UncertaintyMethod::Is => score_is(&models.is.as_ref().ok_or_else(|| missing(method))?.predict(x)?),
        UncertaintyMethod::MaxProb | UncertaintyMethod::Entropy => {
            let probs = models.base.as_ref().ok_or_else(|| missing(method))?.predict(x)?.class_probs;
            if method == UncertaintyMethod::MaxProb {
                score_maxprob(&probs)
            } else {
                score_entropy(&probs)
            }
        }
        UncertaintyMethod::McDropout { passes } => {
            let net = models.mcd.as_ref().ok_or_else(|| missing(method))?;
            let mut rng = RngStream::new(seed, MC_SCORING_STREAM + tag);
            score_predictive_entropy(&mc_dropout_predict(net, x, passes, &mut rng)?)
        }
        UncertaintyMethod::DeepEnsemble { .. } => {
            let nets = models.ensemble.as_ref().ok_or_else(|| missing(method))?;
            let stack = nets
                .iter()
                .map(|n| Ok(n.predict(x)?.class_probs))
                .collect::<Result<Vec<_>>>()?;
            score_predictive_entropy(&stack)
        }
    }
}

/// Runs `per_seed` for every configured seed in parallel, keeping seed order.
fn per_seed<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(u64) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let chunks = cfg
        .seeds
        .par_iter()
        .map(|&s| f(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn ood_auc_ap(test: &ScoredBatch, ood: &ScoredBatch) -> Result<(f64, f64)> {
    let set = BinaryScoredSet::from_groups(&test.scores, &ood.scores)?;
    Ok((set.roc_auc()?, set.average_precision()?))
}

/// In-distribution test samples are negatives, OOD samples positives.
pub fn run_ood_experiment(cfg: &ExperimentConfig) -> Result<Vec<OodResultRow>> {
    run_ood_experiment_with_data(cfg, &load_data(&cfg.data)?)
}

pub fn run_ood_experiment_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<OodResultRow>> {
    let methods = cfg.uncertainty_methods()?;
    let ood = data.require_ood()?;
    per_seed(cfg, |seed| {
        let models = train_models(cfg, &methods, &data.train, seed)?;
        methods
            .iter()
            .map(|&m| {
                let test = score(&models, m, data.test.features(), seed, 0)?;
                let out = score(&models, m, ood, seed, 1)?;
                let (roc_auc, average_precision) = ood_auc_ap(&test, &out)?;
                Ok(OodResultRow {
                    method: m.label().to_string(),
                    seed,
                    roc_auc,
                    average_precision,
                })
            })
            .collect()
    })
}

fn wrong_prediction_auc(scored: &ScoredBatch, labels: &[usize]) -> Result<(Option<f64>, String)> {
    let wrong: Vec<bool> = scored
        .probs
        .argmax_rows()
        .iter()
        .zip(labels)
        .map(|(p, l)| p != l)
        .collect();
    if wrong.iter().all(|&w| !w) {
        return Ok((None, "skipped: all predictions correct".into()));
    }
    if wrong.iter().all(|&w| w) {
        return Ok((None, "skipped: all predictions wrong".into()));
    }
    Ok((Some(roc_auc(&scored.scores, &wrong)?), "ok".into()))
}

/// Wrong predictions are positives; only ROC AUC is reported.
pub fn run_wrong_prediction_experiment(cfg: &ExperimentConfig) -> Result<Vec<WrongPredRow>> {
    run_wrong_prediction_experiment_with_data(cfg, &load_data(&cfg.data)?)
}

pub fn run_wrong_prediction_experiment_with_data(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<Vec<WrongPredRow>> {
    let methods = cfg.uncertainty_methods()?;
    per_seed(cfg, |seed| {
        let models = train_models(cfg, &methods, &data.train, seed)?;
        methods
            .iter()
            .map(|&m| {
                let scored = score(&models, m, data.test.features(), seed, 0)?;
                let (roc_auc, status) = wrong_prediction_auc(&scored, data.test.labels())?;
                Ok(WrongPredRow {
                    method: m.label().to_string(),
                    seed,
                    roc_auc,
                    status,
                })
            })
            .collect()
    })
}

/// Accuracy and NLL of each method's class probabilities on the test set.
pub fn run_predictive_performance(cfg: &ExperimentConfig) -> Result<Vec<PerfRow>> {
    run_predictive_performance_with_data(cfg, &load_data(&cfg.data)?)
}

pub fn run_predictive_performance_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<PerfRow>> {
    let methods = cfg.uncertainty_methods()?;
    per_seed(cfg, |seed| {
        let models = train_models(cfg, &methods, &data.train, seed)?;
        methods
            .iter()
            .map(|&m| {
                let scored = score(&models, m, data.test.features(), seed, 0)?;
                Ok(PerfRow {
                    method: m.label().to_string(),
                    seed,
                    accuracy: accuracy(&scored.probs, data.test.labels())?,
                    nll: nll(&scored.probs, data.test.labels())?,
                })
            })
            .collect()
    })
}

/// One-factor-at-a-time sweeps around the configured IS network.
pub fn ablation_variants(cfg: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for lambda in [0.0, 1e-6, 1e-4, 1e-2] {
        let mut c = cfg.clone();
        c.loss.lambda = lambda;
        out.push((format!("lambda={lambda:e}"), c));
    }
    for act in [Activation::Cauchy, Activation::Gaussian, Activation::Triangle, Activation::Relu] {
        let mut c = cfg.clone();
        c.network.penultimate = act;
        out.push((format!("penultimate={}", act.name()), c));
    }
    for wd in [0.0, 1e-4, 1e-2] {
        let mut c = cfg.clone();
        c.loss.weight_decay = wd;
        out.push((format!("weight_decay={wd:e}"), c));
    }
    out
}

pub const ABLATION_METRICS: [&str; 3] = ["ood_roc_auc", "wrongpred_roc_auc", "accuracy"];

pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    run_ablation_with_data(cfg, &load_data(&cfg.data)?)
}

pub fn run_ablation_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Vec<AblationRow>> {
    let ood = data.require_ood()?;
    let variants = ablation_variants(cfg);
    let jobs: Vec<(&str, &ExperimentConfig, u64)> = variants
        .iter()
        .flat_map(|(name, c)| cfg.seeds.iter().map(move |&s| (name.as_str(), c, s)))
        .collect();
    let chunks = jobs
        .par_iter()
        .map(|&(name, c, seed)| {
            let models = train_models(c, &[UncertaintyMethod::Is], &data.train, seed)?;
            let test = score(&models, UncertaintyMethod::Is, data.test.features(), seed, 0)?;
            let out = score(&models, UncertaintyMethod::Is, ood, seed, 1)?;
            let (ood_auc, _) = ood_auc_ap(&test, &out)?;
            let (wrong_auc, _) = wrong_prediction_auc(&test, data.test.labels())?;
            let acc = accuracy(&test.probs, data.test.labels())?;
            Ok([Some(ood_auc), wrong_auc, Some(acc)]
                .into_iter()
                .zip(ABLATION_METRICS)
                .map(|(value, metric)| AblationRow {
                    variant: name.to_string(),
                    seed,
                    metric,
                    value,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Trains the `network.head` network on the first seed.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainedNetwork> {
    let data = load_data(&cfg.data)?;
    fit(&cfg.train_spec(), &data.train, &cfg.train_config(cfg.seeds[0]), 0)
}

/// Mean of the `Some` values, in insertion order of the keys.
pub fn mean_by_key<K: PartialEq>(
    items: impl IntoIterator<Item = (K, Option<f64>)>,
) -> Vec<(K, Option<f64>)> {
    let mut acc: Vec<(K, f64, usize)> = Vec::new();
    for (k, v) in items {
        let pos = match acc.iter().position(|(key, ..)| *key == k) {
            Some(p) => p,
            None => {
                acc.push((k, 0.0, 0));
                acc.len() - 1
            }
        };
        if let Some(v) = v {
            acc[pos].1 += v;
            acc[pos].2 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, sum, n)| (k, (n > 0).then(|| sum / n as f64)))
        .collect()
}
