//! Scalar uncertainty scores from model outputs. Higher means more uncertain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::HeadOutput;
use crate::matrix::Matrix;
use crate::network::{ForwardKind, Network};
use crate::rng::RngStream;

pub const DEFAULT_MC_PASSES: usize = 50;
pub const DEFAULT_ENSEMBLE_MEMBERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    /// Inhibited Softmax uncertainty channel `P_u`.
    Is,
    /// `1 - max_i p_i` on a softmax network.
    MaxProb,
    /// Entropy of the softmax probabilities.
    Entropy,
    /// Predictive entropy over stochastic dropout passes.
    McDropout { passes: usize },
    /// Predictive entropy over independently trained members.
    DeepEnsemble { members: usize },
}

impl UncertaintyMethod {
    /// Short table label: IS, BASE, BASEE, MCD, DE.
    pub fn label(&self) -> &'static str {
        match self {
            UncertaintyMethod::Is => "IS",
            UncertaintyMethod::MaxProb => "BASE",
            UncertaintyMethod::Entropy => "BASEE",
            UncertaintyMethod::McDropout { .. } => "MCD",
            UncertaintyMethod::DeepEnsemble { .. } => "DE",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "is" => Ok(UncertaintyMethod::Is),
            "base" | "maxprob" => Ok(UncertaintyMethod::MaxProb),
            "basee" | "entropy" => Ok(UncertaintyMethod::Entropy),
            "mcd" => Ok(UncertaintyMethod::McDropout {
                passes: DEFAULT_MC_PASSES,
            }),
            "de" => Ok(UncertaintyMethod::DeepEnsemble {
                members: DEFAULT_ENSEMBLE_MEMBERS,
            }),
            other => Err(Error::Config(format!("unknown uncertainty method '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UncertaintyMethod::McDropout { passes } if passes < 2 => Err(Error::Config(
                "Monte Carlo dropout needs at least two passes".into(),
            )),
            UncertaintyMethod::DeepEnsemble { members } if members < 2 => Err(Error::Config(
                "a deep ensemble needs at least two members".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for UncertaintyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-sample scores plus the probabilities used for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBatch {
    pub scores: Vec<f64>,
    pub probs: Matrix,
}

fn check_prob_rows(probs: &Matrix) -> Result<()> {
    for (r, row) in probs.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row {r} is not a probability vector (sum {s})"
            )));
        }
    }
    Ok(())
}

fn entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `P_u` as the score; class outputs divided by `P_c` so rows sum to 1.
pub fn score_is(out: &HeadOutput) -> Result<ScoredBatch> {
    let pu = out.uncertainty.as_ref().ok_or_else(|| {
        Error::InvalidArgument("head output has no uncertainty channel".into())
    })?;
    let mut probs = out.class_probs.clone();
    for (r, row_sum) in out.class_probs.row_sums().into_iter().enumerate() {
        for c in 0..probs.cols() {
            probs.set(r, c, probs.get(r, c) / row_sum);
        }
    }
    probs.ensure_finite("score_is")?;
    Ok(ScoredBatch {
        scores: pu.clone(),
        probs,
    })
}

pub fn score_maxprob(probs: &Matrix) -> Result<ScoredBatch> {
    check_prob_rows(probs)?;
    Ok(ScoredBatch {
        scores: probs
            .row_iter()
            .map(|r| 1.0 - r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        probs: probs.clone(),
    })
}

/// Natural-log entropy with `0 · ln 0 = 0`.
pub fn score_entropy(probs: &Matrix) -> Result<ScoredBatch> {
    check_prob_rows(probs)?;
    Ok(ScoredBatch {
        scores: probs.row_iter().map(entropy).collect(),
        probs: probs.clone(),
    })
}

/// Entropy of the elementwise mean of the stacked probability matrices.
pub fn score_predictive_entropy(stack: &[Matrix]) -> Result<ScoredBatch> {
    if stack.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "predictive entropy needs at least two members, got {}",
            stack.len()
        )));
    }
    let shape = stack[0].shape();
    let mut sum = Matrix::zeros(shape.0, shape.1);
    for m in stack {
        if m.shape() != shape {
            return Err(Error::shape(
                "score_predictive_entropy",
                format!("{:?} vs {:?}", m.shape(), shape),
            ));
        }
        sum = sum.add(m)?;
    }
    let mean = sum.scale(1.0 / stack.len() as f64)?;
    score_entropy(&mean)
}

/// Runs `passes` forward passes with fresh dropout masks.
pub fn mc_dropout_predict(
    net: &Network,
    x: &Matrix,
    passes: usize,
    rng: &mut RngStream,
) -> Result<Vec<Matrix>> {
    if !net.has_dropout() {
        return Err(Error::Config(
            "Monte Carlo dropout needs a network with dropout layers".into(),
        ));
    }
    if passes < 2 {
        return Err(Error::InvalidArgument("need at least two passes".into()));
    }
    (0..passes)
        .map(|_| {
            let (out, _) = net.forward(x, ForwardKind::Stochastic, Some(rng))?;
            normalised_probs(out)
        })
        .collect()
}

/// Class probabilities summing to 1, whatever the head.
pub fn normalised_probs(out: HeadOutput) -> Result<Matrix> {
    if out.uncertainty.is_some() {
        Ok(score_is(&out)?.probs)
    } else {
        Ok(out.class_probs)
    }
}
