use std::fmt;

use crate::data::PairSet;
use crate::error::{Error, Result};
use crate::model::{ArchKind, Checkpoint, CheckpointMeta, Network};
use crate::nn::{dropout_forward, mse_loss, softmax_cross_entropy, Layer, Standardize};
use crate::tensor::{SeededRng, Tensor};

use super::config::{dropout_rate_at, LossReduction, TrainConfig};
use super::optim::{sgd_momentum_step, OptimizerState};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Summary of one finished epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples, measured before each update.
    pub loss: f64,
    pub dropout: f64,
    pub learning_rate: f64,
}

impl fmt::Display for EpochStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={} dropout={} lr={}",
            self.epoch, self.loss, self.dropout, self.learning_rate
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub dropout_history: Vec<f64>,
    pub steps: u64,
}

impl TrainReport {
    /// Checkpoint metadata describing this run.
    pub fn meta(&self, config: &TrainConfig) -> CheckpointMeta {
        CheckpointMeta {
            epoch: self.loss_history.len(),
            seed: config.seed,
            dropout_rate: self.dropout_history.last().copied().unwrap_or(0.0),
            finetuned_from: None,
            config_hash: None,
            classes: Vec::new(),
        }
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("loss became {loss} in epoch {epoch}")))
    }
}

fn log_warnings(config: &TrainConfig) {
    for w in config.warnings() {
        log::warn!("{w}");
    }
}

/// Trains a temporal encoder to map each input window to its successor
/// window under mean squared error.
pub fn train_te<P: PairSet + ?Sized>(net: &mut Network, pairs: &P, config: &TrainConfig) -> Result<TrainReport> {
    let mut state = OptimizerState::new(net);
    train_te_with(net, pairs, config, &mut state, &mut |s| log::debug!("{s}"))
}

/// [`train_te`] with an explicit optimiser state and a per-epoch callback.
pub fn train_te_with<P: PairSet + ?Sized>(
    net: &mut Network,
    pairs: &P,
    config: &TrainConfig,
    state: &mut OptimizerState,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainReport> {
    config.validate()?;
    log_warnings(config);
    if !net.kind().is_temporal_encoder() {
        return Err(Error::Config(format!(
            "train_te needs a temporal encoder, got {}",
            net.kind()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Config("training set has no window pairs".into()));
    }
    if pairs.window_size() != net.input_width() {
        return Err(Error::Config(format!(
            "pairs hold {}-value windows but the network expects {}",
            pairs.window_size(),
            net.input_width()
        )));
    }
    let root = SeededRng::new(config.seed);
    let mut shuffle_rng = root.fork(SHUFFLE_STREAM);
    let mut dropout_rng = root.fork(DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        let rate = dropout_rate_at(epoch, config.epochs, config)?;
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = pairs.batch(chunk)?;
            let (x, _) = dropout_forward(&x, rate, &mut dropout_rng, true)?;
            let cache = net.forward_cached(&x, false)?;
            let loss = mse_loss(cache.output(), &y)?;
            check_loss(loss.value, epoch)?;
            total += loss.value * chunk.len() as f64;
            let mut grad = loss.grad;
            if config.loss_reduction == LossReduction::Window {
                // d/dp of ½‖p − t‖² / B, from 2(p − t)/(B·D)
                let half_d = net.output_width() as f64 / 2.0;
                grad.data_mut().iter_mut().for_each(|g| *g *= half_d);
            }
            let grads = net.backward(&cache, &grad)?;
            sgd_momentum_step(net, &grads, state, config)?;
        }
        let stats = EpochStats {
            epoch,
            loss: total / pairs.len() as f64,
            dropout: rate,
            learning_rate: config.learning_rate,
        };
        on_epoch(&stats);
        report.loss_history.push(stats.loss);
        report.dropout_history.push(rate);
    }
    report.steps = state.step;
    Ok(report)
}

/// Gathers rows of `x` into a new `[indices.len() × width]` tensor.
fn gather_rows(x: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let w = x.row_len();
    let mut out = Vec::with_capacity(indices.len() * w);
    for &i in indices {
        out.extend_from_slice(x.row(i));
    }
    Tensor::new(&[indices.len(), w], out)
}

/// Trains a classifier on `features` (`[N × F]`) under softmax cross-entropy.
/// A leading standardisation layer is first fitted to the features. Inputs
/// are not dropped out.
pub fn train_classifier(
    clf: &mut Network,
    features: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let mut state = OptimizerState::new(clf);
    train_classifier_with(clf, features, labels, config, &mut state, &mut |s| log::debug!("{s}"))
}

pub fn train_classifier_with(
    clf: &mut Network,
    features: &Tensor,
    labels: &[usize],
    config: &TrainConfig,
    state: &mut OptimizerState,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainReport> {
    config.validate()?;
    log_warnings(config);
    if clf.kind() != ArchKind::Classifier {
        return Err(Error::Config(format!(
            "train_classifier needs a classifier, got {}",
            clf.kind()
        )));
    }
    if features.shape().len() != 2 || features.rows() != labels.len() {
        return Err(Error::Config(format!(
            "{} feature rows but {} labels",
            features.shape()[0],
            labels.len()
        )));
    }
    if features.row_len() != clf.input_width() {
        return Err(Error::Config(format!(
            "features have width {}, classifier expects {}",
            features.row_len(),
            clf.input_width()
        )));
    }
    let classes = clf.output_width();
    if classes < 2 {
        return Err(Error::Config("a classifier needs at least two classes".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Config(format!("label {l} out of range for {classes} classes")));
    }
    if labels.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Config("training labels contain a single class".into()));
    }
    if let Some(first) = clf.layers_mut().first_mut() {
        if let Layer::Standardize(s) = &mut first.layer {
            *s = Standardize::fit(features);
        }
    }
    let mut rng = SeededRng::new(config.seed).fork(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = gather_rows(features, chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = clf.forward_cached(&x, true)?;
            let loss = softmax_cross_entropy(cache.output(), &y)?;
            check_loss(loss.value, epoch)?;
            total += loss.value * chunk.len() as f64;
            let grads = clf.backward(&cache, &loss.grad)?;
            sgd_momentum_step(clf, &grads, state, config)?;
        }
        let stats = EpochStats {
            epoch,
            loss: total / labels.len() as f64,
            dropout: 0.0,
            learning_rate: config.learning_rate,
        };
        on_epoch(&stats);
        report.loss_history.push(stats.loss);
        report.dropout_history.push(0.0);
    }
    report.steps = state.step;
    Ok(report)
}

/// Continues training a trained encoder at `learning_rate · finetune_lr_factor`
/// with a fresh optimiser state.
pub fn finetune<P: PairSet + ?Sized>(net: &mut Network, pairs: &P, config: &TrainConfig) -> Result<TrainReport> {
    finetune_with(net, pairs, config, &mut |s| log::debug!("{s}"))
}

pub fn finetune_with<P: PairSet + ?Sized>(
    net: &mut Network,
    pairs: &P,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainReport> {
    let cfg = TrainConfig {
        learning_rate: config.learning_rate * config.finetune_lr_factor,
        ..config.clone()
    };
    let mut state = OptimizerState::new(net);
    train_te_with(net, pairs, &cfg, &mut state, on_epoch)
}

/// Fine-tunes a checkpointed encoder and records where it came from.
pub fn finetune_checkpoint<P: PairSet + ?Sized>(
    base: &Checkpoint,
    pairs: &P,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(Checkpoint, TrainReport)> {
    let mut net = base.network.clone();
    let report = finetune_with(&mut net, pairs, config, on_epoch)?;
    let mut meta = report.meta(config);
    meta.config_hash = base.meta.config_hash.clone();
    meta.finetuned_from = Some(format!(
        "{} epoch={} seed={}{}",
        base.network.kind(),
        base.meta.epoch,
        base.meta.seed,
        base.meta
            .config_hash
            .as_ref()
            .map(|h| format!(" config={h}"))
            .unwrap_or_default()
    ));
    Ok((Checkpoint::new(net, meta), report))
}
