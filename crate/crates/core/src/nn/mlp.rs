//! Dense feed-forward network: affine layers with an element-wise activation
//! on every hidden layer and identity on the output layer.
//!
//! Weights are `(d_in x d_out)` row-major, so a batch forward is
//! `X W + b` with `X` of shape `(batch x d_in)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hidden-layer activation. The output layer is always identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One affine layer: weight `(d_in x d_out)` plus bias of length `d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    #[serde(rename = "w")]
    pub weight: Matrix,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Dense {
            weight: Matrix::zeros(d_in, d_out),
            bias: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }
}

/// The trainable parameters of one MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.d_in(), l.d_out()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Flat view of all gradient components, weights before bias per layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Intermediate values of one forward pass, reused by the backward pass.
///
/// `inputs[k]` is the input that layer `k` saw (so `inputs[0]` is the network
/// input); `pre_acts[k]` is the affine output of layer `k` before activation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Matrix>,
    pub pre_acts: Vec<Matrix>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over all hidden units, used by gradient
    /// checks to skip relu kinks.
    pub fn min_abs_hidden_pre_act(&self) -> f64 {
        let n_hidden = self.pre_acts.len().saturating_sub(1);
        self.pre_acts[..n_hidden]
            .iter()
            .flat_map(|m| m.as_slice().iter())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }
}

impl MlpParams {
    /// Builds a network with the given layer sizes, e.g. `[2, 64, 64, 1]`.
    /// Weights are uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let limit = (6.0 / (d_in + d_out) as f64).sqrt();
            let mut weight = Matrix::zeros(d_in, d_out);
            for v in weight.as_mut_slice() {
                *v = rng.gen_range(-limit..limit);
            }
            layers.push(Dense {
                weight,
                bias: vec![0.0; d_out],
            });
        }
        MlpParams { layers, activation }
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out()
    }

    /// Validates that consecutive layer shapes chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("MLP must have at least one layer".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.d_out() {
                return Err(Error::shape_mismatch(
                    format!("layer {k} bias"),
                    format!("{}", l.d_out()),
                    format!("{}", l.bias.len()),
                ));
            }
            if k + 1 < self.layers.len() && l.d_out() != self.layers[k + 1].d_in() {
                return Err(Error::shape_mismatch(
                    format!("layer {k} -> layer {}", k + 1),
                    format!("{} inputs", l.d_out()),
                    format!("{} inputs", self.layers[k + 1].d_in()),
                ));
            }
        }
        Ok(())
    }

    /// Forward pass over a batch. Returns the output `(batch x d_out)` and
    /// the cache needed by [`MlpParams::backward`].
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.d_in() {
            return Err(Error::shape_mismatch(
                "mlp forward (layer 0)",
                format!("{} input columns", self.d_in()),
                format!("{}", input.cols()),
            ));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers);
        let mut x = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.matmul(&layer.weight).map_err(|_| {
                Error::shape_mismatch(
                    format!("mlp forward (layer {k})"),
                    format!("{} input columns", layer.d_in()),
                    format!("{}", x.cols()),
                )
            })?;
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                for (v, b) in row.iter_mut().zip(layer.bias.iter()) {
                    *v += b;
                }
            }
            inputs.push(x);
            pre_acts.push(z.clone());
            if k + 1 < n_layers {
                for v in z.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
            }
            x = z;
        }
        Ok((x, ForwardCache { inputs, pre_acts }))
    }

    /// Backward pass. `grad_output` is dLoss/dOutput for the batch the cache
    /// was produced from. Returns parameter gradients and dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        let n_layers = self.layers.len();
        if cache.inputs.len() != n_layers || cache.pre_acts.len() != n_layers {
            return Err(Error::shape_mismatch(
                "mlp backward (cache)",
                format!("{n_layers} cached layers"),
                format!("{}", cache.inputs.len()),
            ));
        }
        let last = &cache.pre_acts[n_layers - 1];
        if grad_output.rows() != last.rows() || grad_output.cols() != last.cols() {
            return Err(Error::shape_mismatch(
                format!("mlp backward (layer {})", n_layers - 1),
                format!("{}x{}", last.rows(), last.cols()),
                format!("{}x{}", grad_output.rows(), grad_output.cols()),
            ));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut grad = grad_output.clone();
        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            let input = &cache.inputs[k];
            if input.cols() != layer.d_in() {
                return Err(Error::shape_mismatch(
                    format!("mlp backward (layer {k})"),
                    format!("{} cached input columns", layer.d_in()),
                    format!("{}", input.cols()),
                ));
            }
            // Identity on the output layer; activation derivative elsewhere.
            let dz = if k == n_layers - 1 {
                grad
            } else {
                let mut dz = grad;
                let pre = &cache.pre_acts[k];
                for (v, z) in dz.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *v *= self.activation.derivative(*z);
                }
                dz
            };
            // dW = X^T dZ, db = column sums of dZ, dX = dZ W^T
            grads.layers[k].weight = input.transpose().matmul(&dz)?;
            let mut db = vec![0.0; layer.d_out()];
            for i in 0..dz.rows() {
                for (b, v) in db.iter_mut().zip(dz.row(i)) {
                    *b += v;
                }
            }
            grads.layers[k].bias = db;
            grad = dz.matmul(&layer.weight.transpose())?;
        }
        Ok((grads, grad))
    }

    /// Flat view of all parameters, same ordering as [`Gradients::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Visits every parameter cell mutably, in flatten order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            for v in l.weight.as_mut_slice() {
                f(v);
            }
            for v in &mut l.bias {
                f(v);
            }
        }
    }
}
