use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

use super::{Activation, DenseGrads};

/// Dense layer whose connectivity is restricted by a binary mask of the same
/// shape as the weights. Masked weights are held at exactly zero.
///
/// Work is proportional to the number of unmasked weights: each input row keeps
/// the list of contiguous unmasked column runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
    mask: Tensor,
    runs: Vec<Vec<(usize, usize)>>,
}

fn column_runs(mask: &Tensor) -> Vec<Vec<(usize, usize)>> {
    let n = mask.shape()[1];
    (0..mask.shape()[0])
        .map(|r| {
            let row = &mask.data()[r * n..(r + 1) * n];
            let mut runs = Vec::new();
            let mut start = None;
            for (j, &m) in row.iter().enumerate() {
                match (m != 0.0, start) {
                    (true, None) => start = Some(j),
                    (false, Some(s)) => {
                        runs.push((s, j));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                runs.push((s, n));
            }
            runs
        })
        .collect()
}

impl MaskedDenseLayer {
    /// The weights are multiplied by the mask on construction.
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation, mask: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(Error::shape("MaskedDenseLayer::new", weights.shape(), bias.shape()));
        }
        if mask.shape() != weights.shape() {
            return Err(Error::shape(
                "MaskedDenseLayer::new mask",
                mask.shape(),
                weights.shape(),
            ));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Param("mask entries must be 0 or 1".into()));
        }
        let mut layer = Self {
            weights,
            bias,
            activation,
            mask,
            runs: Vec::new(),
        };
        layer.refresh();
        Ok(layer)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn active_count(&self) -> usize {
        self.runs.iter().flatten().map(|(s, e)| e - s).sum()
    }

    /// Replaces the weights; masked positions are zeroed.
    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::shape("set_weights", weights.shape(), self.weights.shape()));
        }
        self.weights = weights;
        self.refresh();
        Ok(())
    }

    pub(crate) fn params_mut_unchecked(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.weights, &mut self.bias)
    }

    pub(crate) fn state_mut_unchecked(&mut self) -> (&mut Tensor, &mut Tensor, &mut Tensor) {
        (&mut self.weights, &mut self.bias, &mut self.mask)
    }

    /// Rebuilds the run index from the mask and zeroes masked weights.
    pub(crate) fn refresh(&mut self) {
        self.runs = column_runs(&self.mask);
        for (w, &m) in self.weights.data_mut().iter_mut().zip(self.mask.data()) {
            if m == 0.0 {
                *w = 0.0;
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        if input.shape().len() < 2 || input.row_len() != self.fan_in() {
            return Err(Error::shape("masked_forward", input.shape(), self.weights.shape()));
        }
        Ok(input.rows())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_with(input, self.activation)
    }

    pub(crate) fn forward_with(&self, input: &Tensor, activation: Activation) -> Result<Tensor> {
        let b = self.check_input(input)?;
        let n = self.fan_out();
        let w = self.weights.data();
        let mut out = Vec::with_capacity(b * n);
        for _ in 0..b {
            out.extend_from_slice(self.bias.data());
        }
        for (x_row, o_row) in input.data().chunks(self.fan_in()).zip(out.chunks_mut(n)) {
            for (r, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for &(s, e) in &self.runs[r] {
                    axpy(xv, &w[r * n + s..r * n + e], &mut o_row[s..e]);
                }
            }
        }
        activation.apply(&mut out, n);
        Tensor::new(&[b, n], out)
    }

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
            return Err(Error::shape("masked_backward", upstream.shape(), &[b, n]));
        }
        let dz = activation.backprop(output.data(), upstream.data(), n);
        let w = self.weights.data();
        let mut gw = vec![0.0; k * n];
        let mut gb = vec![0.0; n];
        let mut gi = vec![0.0; b * k];
        for ((x_row, dz_row), gi_row) in input.data().chunks(k).zip(dz.chunks(n)).zip(gi.chunks_mut(k)) {
            for (g, v) in gb.iter_mut().zip(dz_row) {
                *g += v;
            }
            for (r, &xv) in x_row.iter().enumerate() {
                let mut acc = 0.0;
                for &(s, e) in &self.runs[r] {
                    let seg = &dz_row[s..e];
                    if xv != 0.0 {
                        axpy(xv, seg, &mut gw[r * n + s..r * n + e]);
                    }
                    acc += dot(seg, &w[r * n + s..r * n + e]);
                }
                gi_row[r] = acc;
            }
        }
        Ok(DenseGrads {
            input: Tensor::new(input.shape(), gi)?,
            weights: Tensor::new(&[k, n], gw)?,
            bias: Tensor::new(&[n], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;
    use crate::nn::DenseLayer;
    use crate::tensor::SeededRng;

    fn random_mask(rng: &mut SeededRng, k: usize, n: usize) -> Tensor {
        let d = (0..k * n)
            .map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
            .collect();
        Tensor::new(&[k, n], d).unwrap()
    }

    #[test]
    fn all_ones_mask_equals_dense() {
        let mut rng = SeededRng::new(1);
        let w = random(&mut rng, &[6, 4], 1.0);
        let b = random(&mut rng, &[4], 1.0);
        let dense = DenseLayer::new(w.clone(), b.clone(), Activation::Sigmoid).unwrap();
        let masked = MaskedDenseLayer::new(w, b, Activation::Sigmoid, Tensor::full(&[6, 4], 1.0)).unwrap();
        let x = random(&mut rng, &[3, 6], 1.0);
        assert!(dense.forward(&x).unwrap().max_abs_diff(&masked.forward(&x).unwrap()) < 1e-15);
        let up = random(&mut rng, &[3, 4], 1.0);
        let gd = dense.backward(&x, &up).unwrap();
        let gm = masked.backward(&x, &up).unwrap();
        assert!(gd.weights.max_abs_diff(&gm.weights) < 1e-15);
        assert!(gd.input.max_abs_diff(&gm.input) < 1e-14);
    }

    #[test]
    fn all_zero_mask_outputs_activation_of_bias() {
        let mut rng = SeededRng::new(2);
        let w = random(&mut rng, &[5, 3], 1.0);
        let b = random(&mut rng, &[3], 1.0);
        let l = MaskedDenseLayer::new(w, b.clone(), Activation::Linear, Tensor::zeros(&[5, 3])).unwrap();
        let x = random(&mut rng, &[2, 5], 1.0);
        let y = l.forward(&x).unwrap();
        assert_eq!(y.row(0), b.data());
        assert_eq!(y.row(1), b.data());
        let g = l.backward(&x, &random(&mut rng, &[2, 3], 1.0)).unwrap();
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_diagonal_isolates_blocks() {
        // two 3->2 blocks
        let mut mask = Tensor::zeros(&[6, 4]);
        for r in 0..6 {
            for c in 0..4 {
                if (r < 3) == (c < 2) {
                    mask.set(&[r, c], 1.0);
                }
            }
        }
        let mut rng = SeededRng::new(3);
        let w = random(&mut rng, &[6, 4], 1.0);
        let b = random(&mut rng, &[4], 1.0);
        let l = MaskedDenseLayer::new(w.clone(), b.clone(), Activation::Sigmoid, mask).unwrap();
        let mut x = Tensor::zeros(&[1, 6]);
        for r in 0..3 {
            x.set(&[0, r], rng.normal(0.0, 1.0));
        }
        let y = l.forward(&x).unwrap();
        // per-block dense oracle for block 1
        for c in 0..2 {
            let mut z = b.get(&[c]);
            for r in 0..3 {
                z += x.get(&[0, r]) * w.get(&[r, c]);
            }
            assert!((y.get(&[0, c]) - crate::nn::sigmoid(z)).abs() < 1e-15);
        }
        // block 2 sees only its bias
        for c in 2..4 {
            assert_eq!(y.get(&[0, c]), crate::nn::sigmoid(b.get(&[c])));
        }
    }

    #[test]
    fn mask_shape_mismatch_rejected() {
        let r = MaskedDenseLayer::new(
            Tensor::zeros(&[3, 2]),
            Tensor::zeros(&[2]),
            Activation::Linear,
            Tensor::zeros(&[2, 3]),
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn finite_difference_random_mask() {
        let mut rng = SeededRng::new(4);
        let mask = random_mask(&mut rng, 7, 5);
        let l = MaskedDenseLayer::new(
            random(&mut rng, &[7, 5], 0.8),
            random(&mut rng, &[5], 0.3),
            Activation::Sigmoid,
            mask.clone(),
        )
        .unwrap();
        let x = random(&mut rng, &[3, 7], 1.0);
        let probe = random(&mut rng, &[3, 5], 1.0);
        let g = l.backward(&x, &probe).unwrap();
        let nx = numeric_grad(&x, 1e-5, |xp| probe_loss(&l.forward(xp).unwrap(), &probe));
        assert!(rel_err(&g.input, &nx) < 1e-6);
        // weight gradient: differentiate the effective weights W ⊙ M
        let nw = numeric_grad(l.weights(), 1e-5, |wp| {
            let eff: Vec<f64> = wp.data().iter().zip(mask.data()).map(|(w, m)| w * m).collect();
            let d = DenseLayer::new(
                Tensor::new(&[7, 5], eff).unwrap(),
                l.bias().clone(),
                Activation::Sigmoid,
            )
            .unwrap();
            probe_loss(&d.forward(&x).unwrap(), &probe)
        });
        assert!(rel_err(&g.weights, &nw) < 1e-6);
        for (gv, m) in g.weights.data().iter().zip(mask.data()) {
            if *m == 0.0 {
                assert_eq!(*gv, 0.0);
            }
        }
    }
}
