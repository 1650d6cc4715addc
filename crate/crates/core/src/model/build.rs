//! Builders for the three temporal encoders and the classifier.
//!
//! Activation placement: sigmoid everywhere except the bottleneck and the
//! encoder output (linear) and the classifier output (softmax).

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvBank, DenseLayer, Layer, MaskedDenseLayer, Standardize, TemporalConvLayer};
use crate::tensor::{sample_sparse_gaussian_within, SeededRng, Tensor};

use super::network::{NetLayer, Network, Taps};
use super::spec::{ArchKind, ArchitectureSpec, HierarchySpec, InitSpec};

/// Draws sparse Gaussian weights, or leaves everything zero when no rng is
/// supplied (used when a checkpoint will overwrite the parameters).
struct Initializer<'a> {
    rng: Option<&'a mut SeededRng>,
    init: InitSpec,
}

impl Initializer<'_> {
    fn weights(&mut self, fan_in: usize, fan_out: usize, allowed: Option<&[Vec<usize>]>) -> Result<Tensor> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(Tensor::zeros(&[fan_in, fan_out]));
        };
        let nnz = self.init.nonzeros_per_unit.min(fan_in);
        let all: Vec<usize>;
        match allowed {
            Some(cols) => sample_sparse_gaussian_within(rng, fan_in, fan_out, nnz, self.init.std, |c| &cols[c]),
            None => {
                all = (0..fan_in).collect();
                sample_sparse_gaussian_within(rng, fan_in, fan_out, nnz, self.init.std, |_| &all)
            }
        }
    }

    fn dense(&mut self, fan_in: usize, fan_out: usize, act: Activation) -> Result<Layer> {
        let w = self.weights(fan_in, fan_out, None)?;
        Ok(Layer::Dense(DenseLayer::new(w, Tensor::zeros(&[fan_out]), act)?))
    }

    fn masked(&mut self, mask: Tensor, act: Activation) -> Result<Layer> {
        let (k, n) = (mask.shape()[0], mask.shape()[1]);
        let allowed: Vec<Vec<usize>> = (0..n)
            .map(|c| (0..k).filter(|&r| mask.data()[r * n + c] != 0.0).collect())
            .collect();
        let w = self.weights(k, n, Some(&allowed))?;
        Ok(Layer::Masked(MaskedDenseLayer::new(w, Tensor::zeros(&[n]), act, mask)?))
    }

    fn conv(&mut self, channels: usize, window: usize, width: usize, filters: usize) -> Result<TemporalConvLayer> {
        let w = self.weights(channels * width, filters, None)?.transpose()?;
        TemporalConvLayer::new(
            channels,
            window,
            width,
            w,
            Tensor::zeros(&[filters]),
            Activation::Sigmoid,
        )
    }
}

fn named(name: &str, layer: Layer) -> NetLayer {
    NetLayer {
        name: name.to_string(),
        layer,
    }
}

/// Builds the network described by `spec`. With `rng == None` every parameter
/// is zero.
pub fn build(spec: &ArchitectureSpec, rng: Option<&mut SeededRng>) -> Result<Network> {
    match spec.kind {
        ArchKind::Ste => build_ste(spec, rng),
        ArchKind::Cte => build_cte(spec, rng),
        ArchKind::Hte => build_hte(spec, rng),
        ArchKind::Classifier => build_classifier(spec, rng),
    }
}

fn expect_kind(spec: &ArchitectureSpec, kind: ArchKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!("expected a {kind} spec, got {}", spec.kind)));
    }
    spec.validate()
}

/// Bottleneck, upper and output layers shared by all encoders.
fn push_decoder(
    spec: &ArchitectureSpec,
    init: &mut Initializer<'_>,
    from: usize,
    layers: &mut Vec<NetLayer>,
) -> Result<()> {
    layers.push(named(
        "bottleneck",
        init.dense(from, spec.bottleneck, Activation::Linear)?,
    ));
    layers.push(named(
        "upper",
        init.dense(spec.bottleneck, spec.outer_width, Activation::Sigmoid)?,
    ));
    let output = if spec.init.zero_output {
        Layer::Dense(DenseLayer::zeros(
            spec.outer_width,
            spec.window_size(),
            Activation::Linear,
        ))
    } else {
        init.dense(spec.outer_width, spec.window_size(), Activation::Linear)?
    };
    layers.push(named("output", output));
    Ok(())
}

fn decoder_taps(lower: usize) -> Taps {
    Taps {
        lower: Some(lower),
        middle: Some(lower + 1),
        upper: Some(lower + 2),
    }
}

/// Fully-connected `D → outer → bottleneck → outer → D`.
pub fn build_ste(spec: &ArchitectureSpec, rng: Option<&mut SeededRng>) -> Result<Network> {
    expect_kind(spec, ArchKind::Ste)?;
    let mut init = Initializer { rng, init: spec.init };
    let mut layers = vec![named(
        "lower",
        init.dense(spec.window_size(), spec.outer_width, Activation::Sigmoid)?,
    )];
    push_decoder(spec, &mut init, spec.outer_width, &mut layers)?;
    Network::new(spec.clone(), layers, decoder_taps(0))
}

/// Parallel temporal convolutions, concatenated, then the dense stack.
pub fn build_cte(spec: &ArchitectureSpec, rng: Option<&mut SeededRng>) -> Result<Network> {
    expect_kind(spec, ArchKind::Cte)?;
    let mut init = Initializer { rng, init: spec.init };
    let channels = 3 * spec.num_joints;
    let branches = spec
        .conv
        .iter()
        .map(|b| init.conv(channels, spec.delta_t, b.width, b.filters))
        .collect::<Result<Vec<_>>>()?;
    let bank = ConvBank::new(branches)?;
    let concat = bank.out_width();
    let mut layers = vec![
        named("conv", Layer::Conv(bank)),
        named("lower", init.dense(concat, spec.outer_width, Activation::Sigmoid)?),
    ];
    push_decoder(spec, &mut init, spec.outer_width, &mut layers)?;
    Network::new(spec.clone(), layers, decoder_taps(1))
}

/// Connectivity masks of the hierarchy encoder, in layer order:
/// window → joint nodes, joint nodes → limb nodes, limb nodes → group nodes.
pub fn hierarchy_masks(h: &HierarchySpec, delta_t: usize) -> [Tensor; 3] {
    let j = h.num_joints;
    let (jw, lw, gw) = (h.joint_width, h.limb_width, h.group_width);

    let d = 3 * j * delta_t;
    let mut joints = Tensor::zeros(&[d, j * jw]);
    for c in 0..3 {
        for joint in 0..j {
            for t in 0..delta_t {
                let row = (c * j + joint) * delta_t + t;
                for u in 0..jw {
                    joints.set(&[row, joint * jw + u], 1.0);
                }
            }
        }
    }

    let nl = h.limbs.len();
    let mut limbs = Tensor::zeros(&[j * jw, nl * lw]);
    for (l, limb) in h.limbs.iter().enumerate() {
        for &joint in &limb.joints {
            for u in 0..jw {
                for v in 0..lw {
                    limbs.set(&[joint * jw + u, l * lw + v], 1.0);
                }
            }
        }
    }

    let ng = h.groups.len();
    let mut groups = Tensor::zeros(&[nl * lw, ng * gw]);
    for (g, group) in h.groups.iter().enumerate() {
        for name in &group.limbs {
            let l = h.limbs.iter().position(|x| &x.name == name).expect("validated");
            for v in 0..lw {
                for s in 0..gw {
                    groups.set(&[l * lw + v, g * gw + s], 1.0);
                }
            }
        }
    }
    [joints, limbs, groups]
}

/// Joint nodes → limb nodes → limb-group nodes → body, then the dense stack.
pub fn build_hte(spec: &ArchitectureSpec, rng: Option<&mut SeededRng>) -> Result<Network> {
    expect_kind(spec, ArchKind::Hte)?;
    let h = &spec.hierarchy;
    let mut init = Initializer { rng, init: spec.init };
    let [mj, ml, mg] = hierarchy_masks(h, spec.delta_t);
    let group_out = mg.shape()[1];
    let mut layers = vec![
        named("joints", init.masked(mj, Activation::Sigmoid)?),
        named("limbs", init.masked(ml, Activation::Sigmoid)?),
        named("groups", init.masked(mg, Activation::Sigmoid)?),
        named("body", init.dense(group_out, h.body_width, Activation::Sigmoid)?),
    ];
    push_decoder(spec, &mut init, h.body_width, &mut layers)?;
    Network::new(spec.clone(), layers, decoder_taps(3))
}

/// `N → 50 → 20 → M` with a softmax output, preceded by a fixed input
/// standardisation (identity until fitted).
pub fn build_classifier(spec: &ArchitectureSpec, rng: Option<&mut SeededRng>) -> Result<Network> {
    expect_kind(spec, ArchKind::Classifier)?;
    let c = &spec.classifier;
    let mut init = Initializer { rng, init: spec.init };
    let mut layers = vec![named("standardize", Layer::Standardize(Standardize::identity(c.input)))];
    let mut prev = c.input;
    for (i, &h) in c.hidden.iter().enumerate() {
        layers.push(named(
            &format!("hidden{}", i + 1),
            init.dense(prev, h, Activation::Sigmoid)?,
        ));
        prev = h;
    }
    layers.push(named("softmax", init.dense(prev, c.classes, Activation::Softmax)?));
    Network::new(spec.clone(), layers, Taps::default())
}

impl Network {
    /// Input width followed by the output width of every width-changing layer.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        for l in self.layers() {
            if !matches!(l.layer, Layer::Standardize(_)) {
                w.push(l.layer.out_width());
            }
        }
        w
    }
}
