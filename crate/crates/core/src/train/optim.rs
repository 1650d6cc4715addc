use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::ParamKind;
use crate::tensor::Tensor;

use super::config::TrainConfig;

/// Momentum buffers, one per parameter tensor, laid out like
/// [`Network::backward`]'s gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<Vec<Tensor>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(net: &Network) -> Self {
        Self {
            velocity: net
                .layers()
                .iter()
                .map(|l| l.layer.params().iter().map(|p| Tensor::zeros(p.shape())).collect())
                .collect(),
            step: 0,
        }
    }
}

/// `v ← μ·v − lr·(g + λ·w)`, `w ← w + v` for every parameter, then masked
/// weights are forced back to zero.
pub fn sgd_momentum_step(
    net: &mut Network,
    grads: &[Vec<Tensor>],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != net.layers().len() || state.velocity.len() != grads.len() {
        return Err(Error::Param(format!(
            "{} gradient groups and {} velocity groups for {} layers",
            grads.len(),
            state.velocity.len(),
            net.layers().len()
        )));
    }
    let (lr, mu) = (config.learning_rate, config.momentum);
    for ((l, g), v) in net.layers_mut().iter_mut().zip(grads).zip(&mut state.velocity) {
        let kinds = l.layer.param_kinds();
        let params = l.layer.params_mut();
        if params.len() != g.len() || params.len() != v.len() {
            return Err(Error::Param(format!("layer {}: parameter count mismatch", l.name)));
        }
        for (((p, g), v), kind) in params.into_iter().zip(g).zip(v.iter_mut()).zip(kinds) {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return Err(Error::shape("sgd_momentum_step", p.shape(), g.shape()));
            }
            let decay = if kind == ParamKind::Weight || config.decay_biases {
                config.weight_decay
            } else {
                0.0
            };
            for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = mu * *vi - lr * (gi + decay * *w);
                *w += *vi;
            }
        }
        l.layer.enforce_constraints();
    }
    state.step += 1;
    Ok(())
}
