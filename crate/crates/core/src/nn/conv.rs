//! Convolution along the time axis only.
//!
//! A window is laid out `[channels × Δt]` with `channels = 3 · num_joints`
//! (coordinate-major, then joint). Each filter spans every channel and
//! `filter_width` consecutive frames, so sliding happens in time alone. Valid
//! correlation, stride 1, no padding: `Δt − filter_width + 1` positions.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

use super::Activation;

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConvLayer {
    pub channels: usize,
    pub window_len: usize,
    pub filter_width: usize,
    /// `[num_filters × channels·filter_width]`, element `(n, ch, k)` at
    /// `n·(channels·filter_width) + ch·filter_width + k`.
    pub filters: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub filters: Tensor,
    pub bias: Tensor,
}

impl TemporalConvLayer {
    pub fn new(
        channels: usize,
        window_len: usize,
        filter_width: usize,
        filters: Tensor,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        if filter_width == 0 || filter_width > window_len {
            return Err(Error::Param(format!(
                "filter width {filter_width} must be in [1, {window_len}]"
            )));
        }
        let n = bias.len();
        if filters.shape() != [n, channels * filter_width] || bias.shape() != [n] {
            return Err(Error::shape(
                "TemporalConvLayer::new",
                filters.shape(),
                &[n, channels * filter_width],
            ));
        }
        Ok(Self {
            channels,
            window_len,
            filter_width,
            filters,
            bias,
            activation,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.bias.len()
    }

    pub fn positions(&self) -> usize {
        self.window_len - self.filter_width + 1
    }

    pub fn in_width(&self) -> usize {
        self.channels * self.window_len
    }

    pub fn out_width(&self) -> usize {
        self.num_filters() * self.positions()
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        if input.shape().len() < 2 || input.row_len() != self.in_width() {
            return Err(Error::shape(
                "temporal_conv_forward",
                input.shape(),
                &[self.channels, self.window_len],
            ));
        }
        Ok(input.rows())
    }

    fn pre_activation_row(&self, x: &[f64], out: &mut [f64]) {
        let (p, w, t) = (self.positions(), self.filter_width, self.window_len);
        let fw = self.channels * w;
        for n in 0..self.num_filters() {
            let o = &mut out[n * p..(n + 1) * p];
            o.fill(self.bias.data()[n]);
            let f = &self.filters.data()[n * fw..(n + 1) * fw];
            for ch in 0..self.channels {
                for k in 0..w {
                    let wv = f[ch * w + k];
                    if wv != 0.0 {
                        axpy(wv, &x[ch * t + k..ch * t + k + p], o);
                    }
                }
            }
        }
    }

    /// `[B × channels·Δt] → [B × N × (Δt − Δt^w + 1)]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let b = self.check_input(input)?;
        let width = self.out_width();
        let mut out = vec![0.0; b * width];
        for (x, o) in input.data().chunks(self.in_width()).zip(out.chunks_mut(width)) {
            self.pre_activation_row(x, o);
        }
        self.activation.apply(&mut out, width);
        Tensor::new(&[b, self.num_filters(), self.positions()], out)
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        let output = self.forward(input)?;
        self.backward_with_output(input, &output, upstream)
    }

    pub(crate) fn backward_with_output(&self, input: &Tensor, output: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        let b = self.check_input(input)?;
        let width = self.out_width();
        if upstream.len() != b * width || output.len() != b * width {
            return Err(Error::shape(
                "temporal_conv_backward",
                upstream.shape(),
                &[b, self.num_filters(), self.positions()],
            ));
        }
        let dz = self.activation.backprop(output.data(), upstream.data(), width);
        let (p, w, t) = (self.positions(), self.filter_width, self.window_len);
        let fw = self.channels * w;
        let mut gf = vec![0.0; self.filters.len()];
        let mut gb = vec![0.0; self.num_filters()];
        let mut gi = vec![0.0; input.len()];
        for ((x, d), g) in input
            .data()
            .chunks(self.in_width())
            .zip(dz.chunks(width))
            .zip(gi.chunks_mut(self.in_width()))
        {
            for n in 0..self.num_filters() {
                let dn = &d[n * p..(n + 1) * p];
                gb[n] += dn.iter().sum::<f64>();
                let f = &self.filters.data()[n * fw..(n + 1) * fw];
                let gfn = &mut gf[n * fw..(n + 1) * fw];
                for ch in 0..self.channels {
                    for k in 0..w {
                        let lo = ch * t + k;
                        gfn[ch * w + k] += dot(dn, &x[lo..lo + p]);
                        axpy(f[ch * w + k], dn, &mut g[lo..lo + p]);
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::new(input.shape(), gi)?,
            filters: Tensor::new(self.filters.shape(), gf)?,
            bias: Tensor::new(&[self.num_filters()], gb)?,
        })
    }
}

/// Parallel temporal convolutions over the same window whose flattened outputs
/// are concatenated in branch order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub branches: Vec<TemporalConvLayer>,
}

impl ConvBank {
    pub fn new(branches: Vec<TemporalConvLayer>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::Config("convolution bank needs at least one branch".into()))?;
        if branches.iter().any(|b| b.in_width() != first.in_width()) {
            return Err(Error::Config("conv branches must share the input window".into()));
        }
        Ok(Self { branches })
    }

    pub fn in_width(&self) -> usize {
        self.branches[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.branches.iter().map(TemporalConvLayer::out_width).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let b = input.rows();
        let total = self.out_width();
        let mut out = vec![0.0; b * total];
        let mut offset = 0;
        for br in &self.branches {
            let y = br.forward(input)?;
            let w = br.out_width();
            for i in 0..b {
                out[i * total + offset..i * total + offset + w].copy_from_slice(y.row(i));
            }
            offset += w;
        }
        Tensor::new(&[b, total], out)
    }

    pub fn backward(&self, input: &Tensor, output: &Tensor, upstream: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let b = input.rows();
        let total = self.out_width();
        if upstream.len() != b * total || output.len() != b * total {
            return Err(Error::shape("conv_bank_backward", upstream.shape(), &[b, total]));
        }
        let mut gi = Tensor::zeros(input.shape());
        let mut grads = Vec::with_capacity(2 * self.branches.len());
        let mut offset = 0;
        for br in &self.branches {
            let w = br.out_width();
            let slice = |t: &Tensor| -> Result<Tensor> {
                let mut d = Vec::with_capacity(b * w);
                for i in 0..b {
                    d.extend_from_slice(&t.data()[i * total + offset..i * total + offset + w]);
                }
                Tensor::new(&[b, w], d)
            };
            let g = br.backward_with_output(input, &slice(output)?, &slice(upstream)?)?;
            axpy(1.0, g.input.data(), gi.data_mut());
            grads.push(g.filters);
            grads.push(g.bias);
            offset += w;
        }
        Ok((gi, grads))
    }
}
