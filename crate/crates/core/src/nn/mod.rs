//! Layer primitives with hand-derived forward and backward passes.
//!
//! Every layer maps a batch `[B × fan_in]` to `[B × fan_out]`. Backward passes
//! take the cached forward input and output plus the gradient of the loss with
//! respect to the layer *output* (post-activation) and return the gradient with
//! respect to the input and to each trainable parameter.

mod conv;
mod dense;
mod dropout;
mod loss;
mod masked;

pub use conv::{ConvBank, ConvGrads, TemporalConvLayer};
pub use dense::{DenseGrads, DenseLayer};
pub use dropout::dropout_forward;
pub use loss::{mse_loss, softmax_cross_entropy, LossValue};
pub use masked::MaskedDenseLayer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
    Softmax,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// In-place activation of a row-major `[rows × width]` buffer.
    pub(crate) fn apply(self, z: &mut [f64], width: usize) {
        match self {
            Activation::Linear => {}
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for row in z.chunks_mut(width) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
    }

    /// Turns `upstream` (d loss / d output) into d loss / d pre-activation, given
    /// the activation output `y`.
    pub(crate) fn backprop(self, y: &[f64], upstream: &[f64], width: usize) -> Vec<f64> {
        match self {
            Activation::Linear => upstream.to_vec(),
            Activation::Sigmoid => y.iter().zip(upstream).map(|(&y, &g)| g * y * (1.0 - y)).collect(),
            Activation::Softmax => {
                let mut out = vec![0.0; y.len()];
                for ((yr, gr), or) in y.chunks(width).zip(upstream.chunks(width)).zip(out.chunks_mut(width)) {
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yi), &gi) in or.iter_mut().zip(yr).zip(gr) {
                        *o = yi * (gi - inner);
                    }
                }
                out
            }
        }
    }
}

/// Fixed per-feature affine map `y = (x - shift) * scale`. Not trained by the
/// optimizer; fitted once from data (used to standardise classifier inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardize {
    pub shift: Tensor,
    pub scale: Tensor,
}

impl Standardize {
    pub fn identity(width: usize) -> Self {
        Self {
            shift: Tensor::zeros(&[width]),
            scale: Tensor::full(&[width], 1.0),
        }
    }

    /// Fits mean / inverse standard deviation per column of `x`. Constant
    /// columns keep scale 1.
    pub fn fit(x: &Tensor) -> Self {
        let (n, w) = (x.rows(), x.row_len());
        let mut mean = vec![0.0; w];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; w];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            shift: Tensor::new(&[w], mean).expect("width >= 1"),
            scale: Tensor::new(&[w], scale).expect("width >= 1"),
        }
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let w = self.shift.len();
        if input.shape().len() < 2 || input.row_len() != w {
            return Err(Error::shape("standardize", input.shape(), &[w]));
        }
        let mut out = input.clone().reshape(&[input.rows(), w])?;
        for row in out.data_mut().chunks_mut(w) {
            for ((v, s), k) in row.iter_mut().zip(self.shift.data()).zip(self.scale.data()) {
                *v = (*v - s) * k;
            }
        }
        Ok(out)
    }
}

/// Which role a parameter tensor plays; weight decay applies to weights only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One stage of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Masked(MaskedDenseLayer),
    Conv(ConvBank),
    Standardize(Standardize),
}

impl Layer {
    pub fn in_width(&self) -> usize {
        match self {
            Layer::Dense(l) => l.fan_in(),
            Layer::Masked(l) => l.fan_in(),
            Layer::Conv(l) => l.in_width(),
            Layer::Standardize(l) => l.shift.len(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Layer::Dense(l) => l.fan_out(),
            Layer::Masked(l) => l.fan_out(),
            Layer::Conv(l) => l.out_width(),
            Layer::Standardize(l) => l.shift.len(),
        }
    }

    /// Activation of the layer output. Conv banks report their first branch's
    /// activation (all branches share one in built networks).
    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(l) => l.activation,
            Layer::Masked(l) => l.activation(),
            Layer::Conv(l) => l.branches[0].activation,
            Layer::Standardize(_) => Activation::Linear,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(input),
            Layer::Masked(l) => l.forward(input),
            Layer::Conv(l) => l.forward(input),
            Layer::Standardize(l) => l.forward(input),
        }
    }

    /// Forward pass with the output activation replaced by `activation`.
    pub(crate) fn forward_with(&self, input: &Tensor, activation: Activation) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward_with(input, activation),
            Layer::Masked(l) => l.forward_with(input, activation),
            _ => self.forward(input),
        }
    }

    /// Returns `(grad_input, grads)` where `grads` aligns with [`Layer::params`].
    pub fn backward(&self, input: &Tensor, output: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.backward_with(input, output, upstream, self.activation())
    }

    pub(crate) fn backward_with(
        &self,
        input: &Tensor,
        output: &Tensor,
        upstream: &Tensor,
        activation: Activation,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        match self {
            Layer::Dense(l) => {
                let g = l.backward_with(input, output, upstream, activation)?;
                Ok((g.input, vec![g.weights, g.bias]))
            }
            Layer::Masked(l) => {
                let g = l.backward_with(input, output, upstream, activation)?;
                Ok((g.input, vec![g.weights, g.bias]))
            }
            Layer::Conv(l) => {
                let (gi, grads) = l.backward(input, output, upstream)?;
                Ok((gi, grads))
            }
            Layer::Standardize(l) => {
                let w = l.shift.len();
                let mut g = upstream.clone();
                for row in g.data_mut().chunks_mut(w) {
                    for (v, k) in row.iter_mut().zip(l.scale.data()) {
                        *v *= k;
                    }
                }
                Ok((g, Vec::new()))
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Masked(l) => vec![l.weights(), l.bias()],
            Layer::Conv(l) => l.branches.iter().flat_map(|b| [&b.filters, &b.bias]).collect(),
            Layer::Standardize(_) => Vec::new(),
        }
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        self.params()
            .iter()
            .enumerate()
            .map(|(i, _)| if i % 2 == 0 { ParamKind::Weight } else { ParamKind::Bias })
            .collect()
    }

    /// Mutable parameter access. Callers that write into masked weights must
    /// call [`Layer::enforce_constraints`] afterwards.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Masked(l) => {
                let (w, b) = l.params_mut_unchecked();
                vec![w, b]
            }
            Layer::Conv(l) => l
                .branches
                .iter_mut()
                .flat_map(|b| [&mut b.filters, &mut b.bias])
                .collect(),
            Layer::Standardize(_) => Vec::new(),
        }
    }

    /// Non-trainable tensors that are still part of the layer state.
    pub fn buffers(&self) -> Vec<&Tensor> {
        match self {
            Layer::Masked(l) => vec![l.mask()],
            Layer::Standardize(l) => vec![&l.shift, &l.scale],
            _ => Vec::new(),
        }
    }

    /// Parameters followed by buffers, in checkpoint order.
    pub(crate) fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Masked(l) => {
                let (w, b, m) = l.state_mut_unchecked();
                vec![w, b, m]
            }
            Layer::Standardize(l) => vec![&mut l.shift, &mut l.scale],
            other => other.params_mut(),
        }
    }

    /// Re-establishes structural invariants after parameters were written.
    pub fn enforce_constraints(&mut self) {
        if let Layer::Masked(l) = self {
            l.refresh();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut z = vec![1.0, 2.0, 3.0, 1000.0, 0.0, -5.0];
        Activation::Softmax.apply(&mut z, 3);
        assert!((z[..3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((z[3..].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn standardize_fit_centres_columns() {
        let x = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardize::fit(&x);
        let y = s.forward(&x).unwrap();
        assert_eq!(y.data(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
