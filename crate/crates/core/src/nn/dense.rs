use crate::error::{Error, Result};
use crate::tensor::{gemm_acc, gemm_nt, gemm_tn_acc, Tensor};

use super::Activation;

/// Fully-connected layer `y = activation(x · W + b)` with `W: [fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::shape("DenseLayer::new", weights.shape(), bias.shape()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub(crate) fn check_input(&self, input: &Tensor) -> Result<usize> {
        if input.shape().len() < 2 || input.row_len() != self.fan_in() {
            return Err(Error::shape("dense_forward", input.shape(), self.weights.shape()));
        }
        Ok(input.rows())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_with(input, self.activation)
    }

    pub(crate) fn forward_with(&self, input: &Tensor, activation: Activation) -> Result<Tensor> {
        let b = self.check_input(input)?;
        let n = self.fan_out();
        let mut out = Vec::with_capacity(b * n);
        for _ in 0..b {
            out.extend_from_slice(self.bias.data());
        }
        gemm_acc(input.data(), self.weights.data(), &mut out, b, self.fan_in(), n);
        activation.apply(&mut out, n);
        Tensor::new(&[b, n], out)
    }

    /// Gradients of a scalar loss given `upstream = dL/d output`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<DenseGrads> {
        let output = self.forward(input)?;
        self.backward_with(input, &output, upstream, self.activation)
    }

    pub(crate) fn backward_with(
        &self,
        input: &Tensor,
        output: &Tensor,
        upstream: &Tensor,
        activation: Activation,
    ) -> Result<DenseGrads> {
        let b = self.check_input(input)?;
        let (k, n) = (self.fan_in(), self.fan_out());
        if upstream.shape() != [b, n] || output.shape() != [b, n] {
            return Err(Error::shape("dense_backward", upstream.shape(), &[b, n]));
        }
        let dz = activation.backprop(output.data(), upstream.data(), n);
        let mut gw = vec![0.0; k * n];
        gemm_tn_acc(input.data(), &dz, &mut gw, b, k, n);
        let mut gb = vec![0.0; n];
        for row in dz.chunks(n) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut gi = vec![0.0; b * k];
        gemm_nt(&dz, self.weights.data(), &mut gi, b, k, n);
        Ok(DenseGrads {
            input: Tensor::new(input.shape(), gi)?,
            weights: Tensor::new(&[k, n], gw)?,
            bias: Tensor::new(&[n], gb)?,
        })
    }
}
