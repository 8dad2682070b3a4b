//! Output heads: the standard softmax and the Inhibited Softmax.
//!
//! The Inhibited Softmax appends a constant logit `a` to the normaliser:
//!
//! ```text
//! IS_a(x)_i = exp(x_i) / (Σ_j exp(x_j) + exp(a))
//! P_c(x)    = Σ_j exp(x_j) / (Σ_j exp(x_j) + exp(a))      certainty factor
//! P_u(x)    = exp(a)       / (Σ_j exp(x_j) + exp(a))      uncertainty channel
//! ```
//!
//! so `IS_a(x) = S(x) · P_c(x)` and cross-entropy on `IS_a` is softmax
//! cross-entropy minus `log P_c`. Training therefore pushes `P_c` up on the
//! training distribution, and `P_u` serves as an uncertainty score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Result<Matrix> {
    logits.ensure_finite("softmax")?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for (r, row) in logits.row_iter().enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out.set(r, c, e / total);
        }
    }
    Ok(out)
}

/// Probabilities produced by a head for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// `batch × n_classes`. For the Inhibited Softmax these are the raw
    /// `IS_a` outputs and rows sum to `P_c`, not 1.
    pub class_probs: Matrix,
    /// `P_u` per sample; present only for the Inhibited Softmax.
    pub uncertainty: Option<Vec<f64>>,
}

impl HeadOutput {
    pub fn batch_len(&self) -> usize {
        self.class_probs.rows()
    }
}

/// Inhibited Softmax with fixed inhibition logit `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhibitedSoftmax {
    pub a: f64,
}

/// Per-row pieces shared by the forward pass and the losses.
struct IsRow {
    shift: f64,
    exps: Vec<f64>,
    class_mass: f64,
    inhibitor: f64,
}

impl IsRow {
    fn new(row: &[f64], a: f64) -> IsRow {
        let shift = row.iter().copied().fold(a, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| (x - shift).exp()).collect();
        let class_mass = exps.iter().sum();
        IsRow {
            shift,
            exps,
            class_mass,
            inhibitor: (a - shift).exp(),
        }
    }

    fn denom(&self) -> f64 {
        self.class_mass + self.inhibitor
    }
}

impl InhibitedSoftmax {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!("inhibition logit a = {a}")));
        }
        Ok(InhibitedSoftmax { a })
    }

    pub fn forward(&self, logits: &Matrix) -> Result<HeadOutput> {
        logits.ensure_finite("is_forward")?;
        let mut probs = Matrix::zeros(logits.rows(), logits.cols());
        let mut uncertainty = Vec::with_capacity(logits.rows());
        for (r, row) in logits.row_iter().enumerate() {
            let parts = IsRow::new(row, self.a);
            let denom = parts.denom();
            for (c, e) in parts.exps.iter().enumerate() {
                probs.set(r, c, e / denom);
            }
            uncertainty.push(parts.inhibitor / denom);
        }
        Ok(HeadOutput {
            class_probs: probs,
            uncertainty: Some(uncertainty),
        })
    }

    /// `P_c(x)` per row.
    pub fn certainty_factor(&self, logits: &Matrix) -> Result<Vec<f64>> {
        logits.ensure_finite("certainty_factor")?;
        Ok(logits
            .row_iter()
            .map(|row| {
                let parts = IsRow::new(row, self.a);
                parts.class_mass / parts.denom()
            })
            .collect())
    }

    /// `P_c` for all-zero logits: `n / (n + e^a)`.
    pub fn base_rate_certainty(&self, n_classes: usize) -> f64 {
        let n = n_classes as f64;
        n / (n + self.a.exp())
    }
}

/// Which head sits on top of the final dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Softmax,
    #[serde(rename = "is")]
    Inhibited { a: f64 },
}

impl Head {
    pub fn inhibited(a: f64) -> Head {
        Head::Inhibited { a }
    }

    pub fn is_inhibited(&self) -> bool {
        matches!(self, Head::Inhibited { .. })
    }

    pub fn forward(&self, logits: &Matrix) -> Result<HeadOutput> {
        match *self {
            Head::Softmax => Ok(HeadOutput {
                class_probs: softmax(logits)?,
                uncertainty: None,
            }),
            Head::Inhibited { a } => InhibitedSoftmax::new(a)?.forward(logits),
        }
    }
}

/// Loss-side hyperparameters.
///
/// `evidence_lambda = 0` disables evidence regularisation entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub evidence_lambda: f64,
    /// Applied by the optimiser as decoupled decay on weights, never through
    /// the loss value.
    pub weight_decay: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            evidence_lambda: 1e-6,
            weight_decay: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.evidence_lambda >= 0.0 && self.evidence_lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "evidence lambda must be finite and >= 0, got {}",
                self.evidence_lambda
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Batch loss and its gradients.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    /// Gradient of the batch-mean loss w.r.t. the logits.
    pub logits: Matrix,
    /// Evidence-regularisation gradient w.r.t. the penultimate activations;
    /// `None` when λ = 0.
    pub penultimate: Option<Matrix>,
}

fn check_targets(targets: &[usize], logits: &Matrix) -> Result<()> {
    if targets.len() != logits.rows() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} targets for {} rows", targets.len(), logits.rows()),
        ));
    }
    if logits.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for &t in targets {
        if t >= logits.cols() {
            return Err(Error::LabelOutOfRange {
                label: t,
                n_classes: logits.cols(),
            });
        }
    }
    Ok(())
}

/// Mean softmax cross-entropy with gradient `(S(x) - onehot(t)) / batch`.
pub fn ce_loss_softmax(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    logits.ensure_finite("ce_loss_softmax")?;
    check_targets(targets, logits)?;
    let batch = logits.rows() as f64;
    let probs = softmax(logits)?;
    let mut grad = probs.scale(1.0 / batch)?;
    let mut loss = 0.0;
    for (r, (row, &t)) in logits.row_iter().zip(targets).enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        loss += log_z - row[t];
        grad.set(r, t, grad.get(r, t) - 1.0 / batch);
    }
    Ok((loss / batch, grad))
}

/// Mean Inhibited-Softmax cross-entropy minus `λ · mean ‖x_p‖₁`.
///
/// The logit gradient is `(IS_a(x) - onehot(t)) / batch`; the penultimate
/// gradient is `-λ · sign(x_p) / batch` with `sign(0) = 0`.
pub fn ce_loss_is(
    head: &InhibitedSoftmax,
    logits: &Matrix,
    targets: &[usize],
    penultimate: &Matrix,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    cfg.validate()?;
    logits.ensure_finite("ce_loss_is")?;
    penultimate.ensure_finite("ce_loss_is")?;
    check_targets(targets, logits)?;
    if penultimate.rows() != logits.rows() {
        return Err(Error::shape(
            "ce_loss_is",
            format!(
                "{} penultimate rows for {} logit rows",
                penultimate.rows(),
                logits.rows()
            ),
        ));
    }
    let batch = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, (row, &t)) in logits.row_iter().zip(targets).enumerate() {
        let parts = IsRow::new(row, head.a);
        let denom = parts.denom();
        loss += parts.shift + denom.ln() - row[t];
        for (c, e) in parts.exps.iter().enumerate() {
            let indicator = if c == t { 1.0 } else { 0.0 };
            grad.set(r, c, (e / denom - indicator) / batch);
        }
    }
    let (penalty, penultimate_grad) = evidence_penalty(penultimate, cfg.evidence_lambda);
    Ok(LossGrad {
        loss: loss / batch + penalty,
        logits: grad,
        penultimate: penultimate_grad,
    })
}

/// Evidence regularisation `-λ · mean_batch ‖x_p‖₁` and its gradient
/// `-λ · sign(x_p) / batch`. Returns `(0, None)` for `λ = 0`.
pub fn evidence_penalty(penultimate: &Matrix, lambda: f64) -> (f64, Option<Matrix>) {
    if lambda == 0.0 || penultimate.rows() == 0 {
        return (0.0, None);
    }
    let batch = penultimate.rows() as f64;
    let l1: f64 = penultimate.as_slice().iter().map(|v| v.abs()).sum();
    (
        -lambda * l1 / batch,
        Some(penultimate.map(|v| -lambda * sign(v) / batch)),
    )
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-sample Inhibited-Softmax cross-entropy `-log IS_a(x)_t`.
pub fn is_sample_losses(head: &InhibitedSoftmax, logits: &Matrix, targets: &[usize]) -> Result<Vec<f64>> {
    check_targets(targets, logits)?;
    Ok(logits
        .row_iter()
        .zip(targets)
        .map(|(row, &t)| {
            let parts = IsRow::new(row, head.a);
            parts.shift + parts.denom().ln() - row[t]
        })
        .collect())
}

/// Per-sample softmax cross-entropy `-log S(x)_t`.
pub fn softmax_sample_losses(logits: &Matrix, targets: &[usize]) -> Result<Vec<f64>> {
    check_targets(targets, logits)?;
    Ok(logits
        .row_iter()
        .zip(targets)
        .map(|(row, &t)| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln() - row[t]
        })
        .collect())
}

/// Gradient of `log P_c` w.r.t. the final-layer bias: `S(x)_i - IS_a(x)_i`.
///
/// Evaluated as `S(x)_i · P_u(x)`, which is the same quantity without the
/// cancellation, so every entry is strictly positive whenever `P_u` does not
/// underflow.
pub fn log_certainty_bias_gradient(head: &InhibitedSoftmax, logits: &Matrix) -> Result<Matrix> {
    let s = softmax(logits)?;
    let out = head.forward(logits)?;
    let pu = out.uncertainty.expect("inhibited head reports uncertainty");
    let mut grad = s;
    for (r, &u) in pu.iter().enumerate() {
        for c in 0..grad.cols() {
            grad.set(r, c, grad.get(r, c) * u);
        }
    }
    Ok(grad)
}

fn shift_logits(logits: &Matrix, delta: f64) -> Result<Matrix> {
    let shifted = logits.map(|v| v + delta);
    shifted.ensure_finite("shift_logits")?;
    Ok(shifted)
}

/// `|l_S(x + δ·1, t) - l_S(x, t)|` for `δ = 1`, with `l_S` the batch-mean
/// softmax cross-entropy.
///
/// Softmax is invariant to a uniform logit shift, so this is zero up to
/// rounding: raising every final-layer bias by the same amount leaves the
/// classification loss unchanged.
pub fn bias_direction_invariance_check(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    let (base, _) = ce_loss_softmax(logits, targets)?;
    let (shifted, _) = ce_loss_softmax(&shift_logits(logits, 1.0)?, targets)?;
    Ok((shifted - base).abs())
}

/// Same probe for the Inhibited Softmax loss, which is not shift-invariant:
/// the shift raises `P_c` and lowers the loss.
pub fn is_shift_sensitivity(head: &InhibitedSoftmax, logits: &Matrix, targets: &[usize]) -> Result<f64> {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let base = mean(is_sample_losses(head, logits, targets)?);
    let shifted = mean(is_sample_losses(head, &shift_logits(logits, 1.0)?, targets)?);
    Ok((shifted - base).abs())
}
