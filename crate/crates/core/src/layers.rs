//! Dense layers, elementwise activations and inverted dropout, each with an
//! analytic backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Elementwise activation.
///
/// The three kernel variants are bump functions with their maximum of 1 at
/// the origin, which makes a layer using them respond only inside a narrow
/// region of its input space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// `1 / (1 + u²)`, the Cauchy density rescaled to peak at 1.
    Cauchy,
    /// `exp(-u² / 2)`, the Gaussian density rescaled to peak at 1.
    Gaussian,
    /// `1 - |u|` on `(-1, 1)`, zero elsewhere.
    Triangle,
}

impl Activation {
    pub const KERNELS: [Activation; 3] =
        [Activation::Cauchy, Activation::Gaussian, Activation::Triangle];

    pub fn is_kernel(self) -> bool {
        matches!(
            self,
            Activation::Cauchy | Activation::Gaussian | Activation::Triangle
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Cauchy => "cauchy",
            Activation::Gaussian => "gaussian",
            Activation::Triangle => "triangle",
        }
    }

    pub fn parse(name: &str) -> Result<Activation> {
        match name.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "cauchy" => Ok(Activation::Cauchy),
            "gaussian" => Ok(Activation::Gaussian),
            "triangle" => Ok(Activation::Triangle),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::Relu => u.max(0.0),
            Activation::Cauchy => 1.0 / (1.0 + u * u),
            Activation::Gaussian => (-0.5 * u * u).exp(),
            Activation::Triangle => {
                if u.abs() < 1.0 {
                    (u + 1.0).min(1.0 - u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative, with the subgradient at kinks (ReLU at 0, triangle at
    /// -1, 0, 1) taken as 0.
    #[inline]
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Cauchy => {
                let d = 1.0 + u * u;
                -2.0 * u / (d * d)
            }
            Activation::Gaussian => -u * (-0.5 * u * u).exp(),
            Activation::Triangle => {
                if u > -1.0 && u < 0.0 {
                    1.0
                } else if u > 0.0 && u < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn forward(self, u: &Matrix) -> Result<Matrix> {
        u.ensure_finite("activation_forward")?;
        Ok(u.map(|v| self.apply(v)))
    }

    pub fn backward(self, u: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        let g = u.zip_map(grad_out, |u, g| g * self.derivative(u))?;
        g.ensure_finite("activation_backward")?;
        Ok(g)
    }
}

/// Fully connected layer computing `x · W (+ b)`.
///
/// `weights` is `in_dim × out_dim`, so a batch of row vectors multiplies from
/// the left.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Matrix,
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Option<Vec<f64>>) -> Result<Self> {
        weights.ensure_finite("DenseLayer::new")?;
        if let Some(b) = &bias {
            if b.len() != weights.cols() {
                return Err(Error::shape(
                    "DenseLayer::new",
                    format!("bias length {} for {} outputs", b.len(), weights.cols()),
                ));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("DenseLayer::new"));
            }
        }
        Ok(DenseLayer { weights, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, has_bias: bool, rng: &mut RngStream) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| {
                rng.uniform(-limit, limit)
                    .expect("glorot limit is positive and finite")
            })
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(in_dim, out_dim, data).expect("shape is consistent"),
            bias: has_bias.then(|| vec![0.0; out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> Option<&mut [f64]> {
        self.bias.as_deref_mut()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                "dense_forward",
                format!("input has {} columns, layer expects {}", x.cols(), self.in_dim()),
            ));
        }
        let out = x.matmul(&self.weights)?;
        match &self.bias {
            Some(b) => out.add_row_broadcast(b),
            None => Ok(out),
        }
    }

    pub fn backward(&self, x: &Matrix, grad_out: &Matrix) -> Result<DenseGrads> {
        if x.cols() != self.in_dim()
            || grad_out.cols() != self.out_dim()
            || x.rows() != grad_out.rows()
        {
            return Err(Error::shape(
                "dense_backward",
                format!(
                    "input {:?}, grad {:?}, layer {}x{}",
                    x.shape(),
                    grad_out.shape(),
                    self.in_dim(),
                    self.out_dim()
                ),
            ));
        }
        Ok(DenseGrads {
            input: grad_out.matmul_t(&self.weights)?,
            weights: x.t_matmul(grad_out)?,
            bias: self.bias.as_ref().map(|_| grad_out.column_sums()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutMode {
    Train,
    EvalDeterministic,
    EvalStochastic,
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` whenever a mask
/// is drawn, so deterministic evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
    pub mode: DropoutMode,
}

impl DropoutLayer {
    pub fn new(rate: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        Ok(DropoutLayer { rate, mode })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns the output together with the scaling mask that was applied
    /// (absent when the layer acted as the identity).
    pub fn forward(
        &self,
        x: &Matrix,
        rng: Option<&mut RngStream>,
    ) -> Result<(Matrix, Option<Matrix>)> {
        if self.rate == 0.0 || self.mode == DropoutMode::EvalDeterministic {
            return Ok((x.clone(), None));
        }
        let rng = rng.ok_or_else(|| {
            Error::InvalidArgument("stochastic dropout needs a random stream".into())
        })?;
        let keep = 1.0 / (1.0 - self.rate);
        let mask_data = (0..x.rows() * x.cols())
            .map(|_| if rng.unit() < self.rate { 0.0 } else { keep })
            .collect();
        let mask = Matrix::from_vec(x.rows(), x.cols(), mask_data)?;
        Ok((x.hadamard(&mask)?, Some(mask)))
    }
}

pub fn dropout_backward(grad_out: &Matrix, mask: Option<&Matrix>) -> Result<Matrix> {
    match mask {
        Some(m) => grad_out.hadamard(m),
        None => Ok(grad_out.clone()),
    }
}
