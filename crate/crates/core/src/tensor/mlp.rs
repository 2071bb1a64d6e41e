//! Fully connected networks with a linear output layer.
//!
//! All parameters live in one flat vector: for each layer the row-major
//! `out × in` weight block followed by the `out` biases. Gradients use the
//! same layout, which keeps Adam, soft target updates and checkpointing
//! trivial slice operations.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::{gemm_into, Matrix, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    params: Vec<f64>,
}

/// Values kept from a forward pass: the input followed by every layer's
/// output (post-activation for hidden layers, raw for the last one).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    layer_sizes: Vec<usize>,
    outputs: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().expect("trace always holds the input")
    }

    /// Per-layer activations, input first.
    pub fn layers(&self) -> &[Matrix] {
        &self.outputs
    }
}

/// Parameter gradients in the network's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub values: Vec<f64>,
}

impl MlpGradients {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn param_count_for(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Default PyTorch-style init: weights and biases uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut params = Vec::with_capacity(param_count_for(layer_sizes));
        for w in layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            params.extend((0..w[0] * w[1] + w[1]).map(|_| dist.sample(rng)));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            params,
        })
    }

    pub fn from_params(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let expected = param_count_for(layer_sizes);
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "network {layer_sizes:?} has {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            params,
        })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!(
                "layer sizes must list at least input and output, all positive; got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        param_count_for(&self.layer_sizes[..=layer])
    }

    /// Row-major `out × in` weights of `layer`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let (i, o) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let start = self.offset(layer);
        &self.params[start..start + i * o]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (i, o) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let start = self.offset(layer) + i * o;
        &self.params[start..start + o]
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let n = batch.rows();
        let mut outputs = Vec::with_capacity(self.layer_sizes.len());
        outputs.push(batch.clone());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let bias = self.bias(l);
            let mut z = Matrix::zeros(n, fan_out);
            for r in 0..n {
                z.row_mut(r).copy_from_slice(bias);
            }
            let x = outputs.last().unwrap();
            gemm_into(
                1.0,
                View::of(x.values(), n, fan_in),
                View::of(self.weights(l), fan_out, fan_in).t(),
                1.0,
                z.values_mut(),
            );
            if l != last {
                let act = self.hidden_activation;
                z.values_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            outputs.push(z);
        }
        Ok(ForwardTrace {
            layer_sizes: self.layer_sizes.clone(),
            outputs,
        })
    }

    /// Forward pass keeping only the output.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.into_output())
    }

    /// Reverse-mode pass. Returns parameter gradients and the gradient
    /// with respect to the input batch.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &Matrix,
    ) -> Result<(MlpGradients, Matrix)> {
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backprop(trace, output_grad, Some(&mut grads))?;
        Ok((MlpGradients { values: grads }, input_grad))
    }

    /// Gradient with respect to the input only; skips parameter gradients.
    pub fn input_gradient(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<Matrix> {
        self.backprop(trace, output_grad, None)
    }

    fn backprop(
        &self,
        trace: &ForwardTrace,
        output_grad: &Matrix,
        mut param_grads: Option<&mut Vec<f64>>,
    ) -> Result<Matrix> {
        if trace.layer_sizes != self.layer_sizes {
            return Err(Error::invalid(format!(
                "activation record is for layers {:?}, network has {:?}",
                trace.layer_sizes, self.layer_sizes
            )));
        }
        let n = trace.outputs[0].rows();
        if output_grad.shape() != (n, self.output_dim()) {
            return Err(Error::invalid(format!(
                "output gradient is {:?}, expected ({n}, {})",
                output_grad.shape(),
                self.output_dim()
            )));
        }
        let last = self.num_layers() - 1;
        let mut delta = output_grad.clone();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if l != last {
                let act = self.hidden_activation;
                let y = trace.outputs[l + 1].values();
                delta
                    .values_mut()
                    .iter_mut()
                    .zip(y)
                    .for_each(|(d, &y)| *d *= act.derivative_from_output(y));
            }
            let x = &trace.outputs[l];
            if let Some(grads) = param_grads.as_deref_mut() {
                let start = self.offset(l);
                let (w_grad, rest) = grads[start..].split_at_mut(fan_in * fan_out);
                gemm_into(
                    1.0,
                    View::of(delta.values(), n, fan_out).t(),
                    View::of(x.values(), n, fan_in),
                    0.0,
                    w_grad,
                );
                let b_grad = &mut rest[..fan_out];
                for r in 0..n {
                    for (b, d) in b_grad.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            let mut prev = Matrix::zeros(n, fan_in);
            gemm_into(
                1.0,
                View::of(delta.values(), n, fan_out),
                View::of(self.weights(l), fan_out, fan_in),
                0.0,
                prev.values_mut(),
            );
            delta = prev;
        }
        Ok(delta)
    }
}
