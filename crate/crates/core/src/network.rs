//! Multilayer perceptrons assembled from a [`NetworkSpec`], with manual
//! backpropagation and a fixed-epoch training loop.
//!
//! Layout for widths `[d0, d1, …, dk, n]`:
//!
//! ```text
//! x ─ dense₁ ─ act ─ drop ─ … ─ dense_k ─ act_penultimate ─ drop ─ dense_out ─ head
//!                                                  └─ x_p (evidence regulariser)
//! ```
//!
//! Hidden layers use `hidden_activation`, except the last one which uses
//! `penultimate_activation`. `x_p` is taken after the activation and before
//! dropout. With no hidden layers `x_p` is the input itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::heads::{ce_loss_is, ce_loss_softmax, evidence_penalty, Head, HeadOutput, InhibitedSoftmax, LossConfig};
use crate::layers::{dropout_backward, Activation, DenseLayer, DropoutLayer, DropoutMode};
use crate::matrix::Matrix;
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub penultimate_activation: Activation,
    pub head: Head,
    pub hidden_bias: bool,
    /// Bias on the final dense layer. Must be `false` under the Inhibited
    /// Softmax: a shared bias shift raises `P_c` without touching the
    /// classification loss.
    pub output_bias: bool,
    pub dropout_rate: f64,
    pub loss: LossConfig,
}

impl NetworkSpec {
    /// Inhibited Softmax network: ReLU hidden layers, `penultimate` kernel,
    /// bias-free output layer.
    pub fn inhibited(layer_widths: Vec<usize>, penultimate: Activation, a: f64, loss: LossConfig) -> Self {
        NetworkSpec {
            layer_widths,
            hidden_activation: Activation::Relu,
            penultimate_activation: penultimate,
            head: Head::inhibited(a),
            hidden_bias: true,
            output_bias: false,
            dropout_rate: 0.0,
            loss,
        }
    }

    /// Plain ReLU MLP with a softmax head and biases everywhere.
    pub fn softmax(layer_widths: Vec<usize>) -> Self {
        NetworkSpec {
            layer_widths,
            hidden_activation: Activation::Relu,
            penultimate_activation: Activation::Relu,
            head: Head::Softmax,
            hidden_bias: true,
            output_bias: true,
            dropout_rate: 0.0,
            loss: LossConfig {
                evidence_lambda: 0.0,
                weight_decay: 0.0,
            },
        }
    }

    /// The XOR toy topology: four hidden layers of 100 units.
    pub fn xor_reference(penultimate: Activation, a: f64, lambda: f64) -> Self {
        NetworkSpec::inhibited(
            vec![2, 100, 100, 100, 100, 2],
            penultimate,
            a,
            LossConfig {
                evidence_lambda: lambda,
                weight_decay: 0.0,
            },
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }

    pub fn n_hidden(&self) -> usize {
        self.layer_widths.len().saturating_sub(2)
    }

    pub fn activation_for(&self, hidden_index: usize) -> Activation {
        if hidden_index + 1 == self.n_hidden() {
            self.penultimate_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 || self.layer_widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths {:?} need an input and an output width, all non-zero",
                self.layer_widths
            )));
        }
        if self.n_classes() < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        if let Head::Inhibited { a } = self.head {
            InhibitedSoftmax::new(a)?;
            if self.output_bias {
                return Err(Error::Config(
                    "the Inhibited Softmax head requires a bias-free output layer".into(),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardKind {
    /// Dropout masks drawn and inverted-scaled.
    Train,
    /// Dropout disabled.
    Eval,
    /// Fresh dropout masks at inference, for Monte Carlo dropout.
    Stochastic,
}

impl ForwardKind {
    fn dropout_mode(self) -> DropoutMode {
        match self {
            ForwardKind::Train => DropoutMode::Train,
            ForwardKind::Eval => DropoutMode::EvalDeterministic,
            ForwardKind::Stochastic => DropoutMode::EvalStochastic,
        }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each dense layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
    penultimate: Matrix,
    logits: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn penultimate(&self) -> &Matrix {
        &self.penultimate
    }
}

/// Per-layer parameter gradients, in layer order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Option<Vec<f64>>)>,
}

impl Gradients {
    /// Flattened in the same order as [`Network::param`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            if let Some(b) = b {
                out.extend_from_slice(b);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<DenseLayer>,
}

impl Network {
    /// Fresh network with Glorot-uniform weights and zero biases.
    pub fn build(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Network> {
        spec.validate()?;
        let n = spec.layer_widths.len() - 1;
        let layers = spec
            .layer_widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bias = if i + 1 == n { spec.output_bias } else { spec.hidden_bias };
                DenseLayer::glorot(w[0], w[1], bias, rng)
            })
            .collect();
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    /// Assembles a network from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<DenseLayer>) -> Result<Network> {
        spec.validate()?;
        if layers.len() + 1 != spec.layer_widths.len() {
            return Err(Error::Config(format!(
                "{} layers for widths {:?}",
                layers.len(),
                spec.layer_widths
            )));
        }
        let n = layers.len();
        for (i, (layer, w)) in layers.iter().zip(spec.layer_widths.windows(2)).enumerate() {
            if layer.in_dim() != w[0] || layer.out_dim() != w[1] {
                return Err(Error::Config(format!(
                    "layer {i} is {}x{}, spec wants {}x{}",
                    layer.in_dim(),
                    layer.out_dim(),
                    w[0],
                    w[1]
                )));
            }
            let want_bias = if i + 1 == n { spec.output_bias } else { spec.hidden_bias };
            if layer.has_bias() != want_bias {
                return Err(Error::Config(format!(
                    "layer {i} bias presence {} contradicts spec {}",
                    layer.has_bias(),
                    want_bias
                )));
            }
        }
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn head(&self) -> Head {
        self.spec.head
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes()
    }

    pub fn has_dropout(&self) -> bool {
        self.spec.dropout_rate > 0.0 && self.spec.n_hidden() > 0
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights().as_slice().len() + l.bias().map_or(0, <[f64]>::len))
            .sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weights().as_slice().len();
            if idx < nw {
                return (li, false, idx);
            }
            idx -= nw;
            let nb = l.bias().map_or(0, <[f64]>::len);
            if idx < nb {
                return (li, true, idx);
            }
            idx -= nb;
        }
        panic!("parameter index out of range");
    }

    /// Parameter `idx` in flat order: layer by layer, weights then bias.
    pub fn param(&self, idx: usize) -> f64 {
        let (li, is_bias, i) = self.locate(idx);
        let l = &self.layers[li];
        if is_bias {
            l.bias().expect("located bias")[i]
        } else {
            l.weights().as_slice()[i]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (li, is_bias, i) = self.locate(idx);
        let l = &mut self.layers[li];
        if is_bias {
            l.bias_mut().expect("located bias")[i] = value;
        } else {
            l.weights_mut().as_mut_slice()[i] = value;
        }
    }

    pub fn forward(
        &self,
        x: &Matrix,
        kind: ForwardKind,
        mut rng: Option<&mut RngStream>,
    ) -> Result<(HeadOutput, ForwardCache)> {
        if x.cols() != self.spec.input_dim() {
            return Err(Error::shape(
                "network_forward",
                format!("input has {} columns, network expects {}", x.cols(), self.spec.input_dim()),
            ));
        }
        x.ensure_finite("network_forward")?;
        let dropout = DropoutLayer::new(self.spec.dropout_rate, kind.dropout_mode())?;
        let n_hidden = self.spec.n_hidden();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(n_hidden);
        let mut masks = Vec::with_capacity(n_hidden);
        let mut penultimate = x.clone();
        let mut h = x.clone();
        for (i, layer) in self.layers[..n_hidden].iter().enumerate() {
            let u = layer.forward(&h)?;
            let a = self.spec.activation_for(i).forward(&u)?;
            let (dropped, mask) = dropout.forward(&a, rng.as_deref_mut())?;
            inputs.push(h);
            pre_activations.push(u);
            masks.push(mask);
            if i + 1 == n_hidden {
                penultimate = a;
            }
            h = dropped;
        }
        let logits = self.layers[n_hidden].forward(&h)?;
        inputs.push(h);
        let out = self.spec.head.forward(&logits)?;
        Ok((
            out,
            ForwardCache {
                inputs,
                pre_activations,
                masks,
                penultimate,
                logits,
            },
        ))
    }

    /// Deterministic inference.
    pub fn predict(&self, x: &Matrix) -> Result<HeadOutput> {
        Ok(self.forward(x, ForwardKind::Eval, None)?.0)
    }

    /// Total loss (cross-entropy plus evidence penalty) and parameter
    /// gradients for a cached forward pass.
    pub fn gradients(&self, cache: &ForwardCache, targets: &[usize]) -> Result<(f64, Gradients)> {
        let lambda = self.spec.loss.evidence_lambda;
        let (loss, grad_logits, grad_penultimate) = match self.spec.head {
            Head::Inhibited { a } => {
                let lg = ce_loss_is(
                    &InhibitedSoftmax::new(a)?,
                    &cache.logits,
                    targets,
                    &cache.penultimate,
                    &self.spec.loss,
                )?;
                (lg.loss, lg.logits, lg.penultimate)
            }
            Head::Softmax => {
                let (ce, g) = ce_loss_softmax(&cache.logits, targets)?;
                let (penalty, gp) = evidence_penalty(&cache.penultimate, lambda);
                (ce + penalty, g, gp)
            }
        };

        let n_hidden = self.spec.n_hidden();
        let mut grads = vec![None; self.layers.len()];
        let out_layer = &self.layers[n_hidden];
        let g = out_layer.backward(&cache.inputs[n_hidden], &grad_logits)?;
        grads[n_hidden] = Some((g.weights, g.bias));
        let mut upstream = g.input;
        for i in (0..n_hidden).rev() {
            let mut grad_act = dropout_backward(&upstream, cache.masks[i].as_ref())?;
            if i + 1 == n_hidden {
                if let Some(gp) = &grad_penultimate {
                    grad_act = grad_act.add(gp)?;
                }
            }
            let grad_pre = self
                .spec
                .activation_for(i)
                .backward(&cache.pre_activations[i], &grad_act)?;
            let g = self.layers[i].backward(&cache.inputs[i], &grad_pre)?;
            grads[i] = Some((g.weights, g.bias));
            upstream = g.input;
        }
        Ok((
            loss,
            Gradients {
                layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            },
        ))
    }

    /// Deterministic total loss, as differentiated by [`Network::gradients`].
    pub fn loss(&self, x: &Matrix, targets: &[usize]) -> Result<f64> {
        let (_, cache) = self.forward(x, ForwardKind::Eval, None)?;
        Ok(self.gradients(&cache, targets)?.0)
    }

    pub fn apply_gradients(&mut self, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape(
                "apply_gradients",
                format!("{} gradient layers for {} layers", grads.layers.len(), self.layers.len()),
            ));
        }
        for (i, (layer, (gw, gb))) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            opt.update(2 * i, layer.weights_mut().as_mut_slice(), gw.as_slice(), true)?;
            match (layer.bias_mut(), gb) {
                (Some(b), Some(g)) => opt.update(2 * i + 1, b, g, false)?,
                (None, None) => {}
                _ => {
                    return Err(Error::shape(
                        "apply_gradients",
                        format!("bias gradient presence mismatch at layer {i}"),
                    ))
                }
            }
        }
        Ok(())
    }

    /// One optimisation step; returns the loss before the update.
    pub fn backward_and_step(
        &mut self,
        cache: &ForwardCache,
        targets: &[usize],
        opt: &mut OptimizerState,
    ) -> Result<f64> {
        let (loss, grads) = self.gradients(cache, targets)?;
        self.apply_gradients(&grads, opt)?;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 64,
            seed: 0,
            shuffle: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub network: Network,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

fn diverged(epoch: usize, batch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(op) => Error::Diverged {
            epoch,
            batch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Trains `net` in place for `cfg.epochs` epochs, drawing shuffles and dropout
/// masks from `rng`.
pub fn train_with_rng(
    mut net: Network,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainedNetwork> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if data.n_features() != net.spec.input_dim() {
        return Err(Error::shape(
            "train",
            format!("{} features for a {}-input network", data.n_features(), net.spec.input_dim()),
        ));
    }
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= net.n_classes()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes: net.n_classes(),
        });
    }
    let mut opt = OptimizerState::new(cfg.optimizer, net.spec.loss.weight_decay)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.features().select_rows(chunk)?;
            let targets: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let step = net
                .forward(&x, ForwardKind::Train, Some(rng))
                .and_then(|(_, cache)| net.backward_and_step(&cache, &targets, &mut opt))
                .map_err(|e| diverged(epoch, b, e))?;
            if !step.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("loss {step}"),
                });
            }
            total += step * chunk.len() as f64;
        }
        history.push(total / data.len() as f64);
    }
    Ok(TrainedNetwork {
        network: net,
        loss_history: history,
    })
}

/// Trains an already-built network with the stream `(cfg.seed, 0)`.
pub fn train(net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainedNetwork> {
    train_with_rng(net, data, cfg, &mut RngStream::new(cfg.seed, 0))
}

/// Builds and trains one network from the stream `(cfg.seed, stream_id)`;
/// initialisation draws first, then shuffles and dropout masks.
pub fn fit(spec: &NetworkSpec, data: &Dataset, cfg: &TrainConfig, stream_id: u64) -> Result<TrainedNetwork> {
    let mut rng = RngStream::new(cfg.seed, stream_id);
    let net = Network::build(spec, &mut rng)?;
    train_with_rng(net, data, cfg, &mut rng)
}

/// Independently initialised and shuffled members on streams `0..members`.
/// Members train in parallel; the result equals sequential training.
pub fn train_ensemble(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    members: usize,
) -> Result<Vec<TrainedNetwork>> {
    if members == 0 {
        return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
    }
    (0..members as u64)
        .into_par_iter()
        .map(|k| fit(spec, data, cfg, k))
        .collect()
}
