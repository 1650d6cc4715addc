use crate::data::PairSet;
use crate::error::{Error, Result};
use crate::model::{NetLayer, Network, Taps};
use crate::nn::{Activation, DenseLayer, Layer};
use crate::tensor::{sample_sparse_gaussian, SeededRng, Tensor};

use super::config::TrainConfig;
use super::optim::OptimizerState;
use super::trainer::{train_te_with, EpochStats};

const PRETRAIN_STREAM: u64 = 3;

/// Dense layers mirroring the shapes of `encoder` in reverse: sigmoid
/// everywhere except the last, which is linear.
fn mirror_decoder(encoder: &[NetLayer], net: &Network, rng: &mut SeededRng) -> Result<Vec<NetLayer>> {
    let init = net.spec().init;
    let n = encoder.len();
    encoder
        .iter()
        .rev()
        .enumerate()
        .map(|(i, l)| {
            let (fan_in, fan_out) = (l.layer.out_width(), l.layer.in_width());
            let act = if i + 1 == n {
                Activation::Linear
            } else {
                Activation::Sigmoid
            };
            let w = if i + 1 == n && init.zero_output {
                Tensor::zeros(&[fan_in, fan_out])
            } else {
                sample_sparse_gaussian(rng, fan_in, fan_out, init.nonzeros_per_unit.min(fan_in), init.std)?
            };
            Ok(NetLayer {
                name: format!("pretrain_decoder{i}"),
                layer: Layer::Dense(DenseLayer::new(w, Tensor::zeros(&[fan_out]), act)?),
            })
        })
        .collect()
}

fn shapes(layers: &[NetLayer]) -> Vec<(usize, usize, Activation)> {
    layers
        .iter()
        .map(|l| (l.layer.in_width(), l.layer.out_width(), l.layer.activation()))
        .collect()
}

/// Greedy layerwise pretraining. For `k = 1..=depth` the first `k` encoder
/// layers are trained, together with a fresh decoder of mirrored shapes, as a
/// shallow encoder for `pretrain_epochs`; the encoder weights are then copied
/// back. At the last stage the network's own decoder is trained instead when
/// its shapes already mirror the encoder. Joint training must still follow.
pub fn pretrain_layerwise<P: PairSet + ?Sized>(
    net: &mut Network,
    pairs: &P,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &EpochStats),
) -> Result<()> {
    if !net.kind().is_temporal_encoder() {
        return Err(Error::Config(format!(
            "pretraining needs a temporal encoder, got {}",
            net.kind()
        )));
    }
    let depth = net.encoder_depth().expect("encoders have a middle tap");
    if depth < 2 {
        return Err(Error::Config("pretraining needs at least two encoder layers".into()));
    }
    if config.pretrain_epochs == 0 {
        return Ok(());
    }
    let cfg = TrainConfig {
        epochs: config.pretrain_epochs,
        ..config.clone()
    };
    let mut rng = SeededRng::new(config.seed).fork(PRETRAIN_STREAM);
    for k in 1..=depth {
        let encoder = net.layers()[..k].to_vec();
        let mut decoder = mirror_decoder(&encoder, net, &mut rng)?;
        let own = &net.layers()[depth..];
        let reuse = k == depth && shapes(own) == shapes(&decoder);
        if reuse {
            decoder = own.to_vec();
        }
        let mut layers = encoder;
        layers.extend(decoder);
        let taps = Taps {
            middle: Some(k - 1),
            ..Taps::default()
        };
        let mut sub = Network::new(net.spec().clone(), layers, taps)?;
        let mut state = OptimizerState::new(&sub);
        train_te_with(&mut sub, pairs, &cfg, &mut state, &mut |s| on_epoch(k, s))?;
        let trained = sub.layers();
        let upto = if reuse { trained.len() } else { k };
        net.layers_mut()[..upto].clone_from_slice(&trained[..upto]);
    }
    Ok(())
}
