//! First-order optimisers with per-tensor state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { lr: f64, momentum: f64 },
    Adadelta { lr: f64, rho: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adadelta {
            lr: 1.0,
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig::Sgd { lr, momentum }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr, momentum } => {
                lr >= 0.0 && lr.is_finite() && (0.0..1.0).contains(&momentum)
            }
            OptimizerConfig::Adadelta { lr, rho, eps } => {
                lr >= 0.0 && lr.is_finite() && (0.0..1.0).contains(&rho) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adadelta { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Sgd { velocity: Vec<f64> },
    Adadelta { sq_grad: Vec<f64>, sq_update: Vec<f64> },
}

impl Slot {
    fn len(&self) -> usize {
        match self {
            Slot::Sgd { velocity } => velocity.len(),
            Slot::Adadelta { sq_grad, .. } => sq_grad.len(),
        }
    }
}

/// Optimiser state. Accumulators are allocated lazily per parameter tensor
/// (identified by a slot index) and must keep that tensor's length.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    weight_decay: f64,
    slots: Vec<Option<Slot>>,
}

impl OptimizerState {
    /// `weight_decay` is decoupled: each step also shrinks decayed tensors by
    /// `lr · weight_decay · w`.
    pub fn new(config: OptimizerConfig, weight_decay: f64) -> Result<Self> {
        config.validate()?;
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!("invalid weight decay {weight_decay}")));
        }
        Ok(OptimizerState {
            config,
            weight_decay,
            slots: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn update(&mut self, slot: usize, params: &mut [f64], grad: &[f64], decay: bool) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::shape(
                "optimizer_update",
                format!("{} parameters, {} gradients", params.len(), grad.len()),
            ));
        }
        if self.slots.len() <= slot {
            self.slots.resize(slot + 1, None);
        }
        let state = self.slots[slot].get_or_insert_with(|| match self.config {
            OptimizerConfig::Sgd { .. } => Slot::Sgd {
                velocity: vec![0.0; params.len()],
            },
            OptimizerConfig::Adadelta { .. } => Slot::Adadelta {
                sq_grad: vec![0.0; params.len()],
                sq_update: vec![0.0; params.len()],
            },
        });
        if state.len() != params.len() {
            return Err(Error::shape(
                "optimizer_update",
                format!("slot {slot} holds {} values, got {}", state.len(), params.len()),
            ));
        }

        let lr = self.config.lr();
        let shrink = if decay { lr * self.weight_decay } else { 0.0 };
        match (state, self.config) {
            (Slot::Sgd { velocity }, OptimizerConfig::Sgd { lr, momentum }) => {
                for ((w, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
                    *v = momentum * *v + g;
                    *w -= shrink * *w + lr * *v;
                }
            }
            (Slot::Adadelta { sq_grad, sq_update }, OptimizerConfig::Adadelta { lr, rho, eps }) => {
                for (((w, eg), ed), &g) in params
                    .iter_mut()
                    .zip(sq_grad.iter_mut())
                    .zip(sq_update.iter_mut())
                    .zip(grad)
                {
                    *eg = rho * *eg + (1.0 - rho) * g * g;
                    let step = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
                    *ed = rho * *ed + (1.0 - rho) * step * step;
                    *w += lr * step - shrink * *w;
                }
            }
            _ => unreachable!("slot kind always matches the configured optimizer"),
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("optimizer_update"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_step_on_quadratic() {
        // f(w) = w², f'(3) = 6, lr 0.1 → 3 - 0.6.
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), 0.0).unwrap();
        let mut w = [3.0];
        opt.update(0, &mut w, &[6.0], true).unwrap();
        assert!((w[0] - 2.4).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.9), 0.0).unwrap();
        let mut w = [0.0];
        opt.update(0, &mut w, &[1.0], true).unwrap();
        opt.update(0, &mut w, &[1.0], true).unwrap();
        // v1 = 1, v2 = 1.9 → w = -0.1 - 0.19
        assert!((w[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.0, 0.9), 0.5).unwrap();
        let mut w = [1.5, -2.0];
        opt.update(0, &mut w, &[3.0, 4.0], true).unwrap();
        assert_eq!(w, [1.5, -2.0]);
    }

    #[test]
    fn adadelta_first_step() {
        // E[g²] = 0.05 g², step = -sqrt(eps)/sqrt(0.05 g² + eps) · g.
        let (rho, eps) = (0.95, 1e-6);
        let mut opt = OptimizerState::new(OptimizerConfig::Adadelta { lr: 1.0, rho, eps }, 0.0).unwrap();
        let mut w = [1.0];
        opt.update(0, &mut w, &[2.0], false).unwrap();
        let expected = 1.0 - (eps.sqrt() / (0.05f64 * 4.0 + eps).sqrt()) * 2.0;
        assert!((w[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adadelta_descends_quadratic() {
        let mut opt = OptimizerState::new(OptimizerConfig::default(), 0.0).unwrap();
        let mut w = [2.0];
        for _ in 0..2000 {
            let g = [2.0 * w[0]];
            opt.update(0, &mut w, &g, true).unwrap();
        }
        assert!(w[0].abs() < 1.0);
    }

    #[test]
    fn decoupled_decay_only_when_requested() {
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), 0.5).unwrap();
        let mut w = [2.0];
        let mut b = [2.0];
        opt.update(0, &mut w, &[0.0], true).unwrap();
        opt.update(1, &mut b, &[0.0], false).unwrap();
        assert!((w[0] - 1.9).abs() < 1e-15);
        assert_eq!(b[0], 2.0);
    }

    #[test]
    fn slot_shape_mismatch() {
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), 0.0).unwrap();
        opt.update(0, &mut [1.0, 2.0], &[0.0, 0.0], true).unwrap();
        assert!(matches!(
            opt.update(0, &mut [1.0], &[0.0], true),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(opt.update(1, &mut [1.0], &[0.0, 1.0], true).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(OptimizerState::new(OptimizerConfig::sgd(-1.0, 0.0), 0.0).is_err());
        assert!(OptimizerState::new(OptimizerConfig::sgd(0.1, 1.0), 0.0).is_err());
        assert!(OptimizerState::new(OptimizerConfig::default(), -0.1).is_err());
    }
}
