use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer};
use crate::tensor::Tensor;

use super::spec::{ArchKind, ArchitectureSpec};

/// Named feature taps of a temporal encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    Lower,
    Middle,
    Upper,
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tap::Lower => "lower",
            Tap::Middle => "middle",
            Tap::Upper => "upper",
        })
    }
}

impl FromStr for Tap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Tap::Lower),
            "middle" => Ok(Tap::Middle),
            "upper" => Ok(Tap::Upper),
            _ => Err(Error::Param(format!("unknown tap {s:?} (expected lower|middle|upper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Taps {
    pub lower: Option<usize>,
    pub middle: Option<usize>,
    pub upper: Option<usize>,
}

impl Taps {
    pub fn get(&self, tap: Tap) -> Option<usize> {
        match tap {
            Tap::Lower => self.lower,
            Tap::Middle => self.middle,
            Tap::Upper => self.upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetLayer {
    pub name: String,
    pub layer: Layer,
}

/// An ordered stack of layers plus the feature taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    layers: Vec<NetLayer>,
    taps: Taps,
}

/// Per-layer activations from a forward pass. `acts[0]` is the input and
/// `acts[i + 1]` the output of layer `i`.
pub struct ForwardCache {
    pub acts: Vec<Tensor>,
    raw_output: bool,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache holds the input")
    }
}

impl Network {
    pub fn new(spec: ArchitectureSpec, layers: Vec<NetLayer>, taps: Taps) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].layer.out_width() != pair[1].layer.in_width() {
                return Err(Error::Config(format!(
                    "layer {} emits {} values but {} expects {}",
                    pair[0].name,
                    pair[0].layer.out_width(),
                    pair[1].name,
                    pair[1].layer.in_width()
                )));
            }
        }
        for idx in [taps.lower, taps.middle, taps.upper].into_iter().flatten() {
            if idx >= layers.len() {
                return Err(Error::Config(format!("tap index {idx} out of range")));
            }
        }
        if spec.kind.is_temporal_encoder() && taps.middle.is_none() {
            return Err(Error::Config("temporal encoder needs a middle tap".into()));
        }
        Ok(Self { spec, layers, taps })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn kind(&self) -> ArchKind {
        self.spec.kind
    }

    pub fn layers(&self) -> &[NetLayer] {
        &self.layers
    }

    /// Mutable layer access. Writers into masked layers must call
    /// [`Layer::enforce_constraints`].
    pub fn layers_mut(&mut self) -> &mut [NetLayer] {
        &mut self.layers
    }

    pub fn taps(&self) -> Taps {
        self.taps
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].layer.in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").layer.out_width()
    }

    /// Number of layers up to and including the bottleneck.
    pub fn encoder_depth(&self) -> Option<usize> {
        self.taps.middle.map(|m| m + 1)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.layer.param_count()).sum()
    }

    pub fn tap_width(&self, tap: Tap) -> Option<usize> {
        self.taps.get(tap).map(|i| self.layers[i].layer.out_width())
    }

    fn as_batch(&self, input: &Tensor) -> Result<Tensor> {
        let w = self.input_width();
        let batch_ok = input.shape().len() >= 2 && input.row_len() == w;
        if input.len() != w && !batch_ok {
            return Err(Error::shape("network input", input.shape(), &[w]));
        }
        input.clone().reshape(&[input.len() / w, w])
    }

    /// Forward pass over a batch `[B × input_width]` (or a single sample of
    /// any shape holding exactly `input_width` values).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = self.as_batch(input)?;
        for l in &self.layers {
            x = l.layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward pass keeping every intermediate activation. With `raw_output`
    /// the final layer's activation is treated as linear (logits for a
    /// softmax classifier).
    pub fn forward_cached(&self, input: &Tensor, raw_output: bool) -> Result<ForwardCache> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(self.as_batch(input)?);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let x = acts.last().expect("non-empty");
            let y = if i == last && raw_output {
                l.layer.forward_with(x, Activation::Linear)?
            } else {
                l.layer.forward(x)?
            };
            acts.push(y);
        }
        Ok(ForwardCache { acts, raw_output })
    }

    /// Parameter gradients per layer, aligned with [`Layer::params`].
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Vec<Vec<Tensor>>> {
        let mut grads = vec![Vec::new(); self.layers.len()];
        let mut g = grad_output.clone();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i].layer;
            let act = if i == last && cache.raw_output {
                Activation::Linear
            } else {
                layer.activation()
            };
            let (gi, gp) = layer.backward_with(&cache.acts[i], &cache.acts[i + 1], &g, act)?;
            grads[i] = gp;
            if i > 0 {
                g = gi;
            }
        }
        Ok(grads)
    }

    /// Predicts the next window from one input window `[3 × J × Δt]`.
    pub fn predict_window(&self, window: &Tensor) -> Result<Tensor> {
        if !self.spec.kind.is_temporal_encoder() {
            return Err(Error::Param("predict_window needs a temporal encoder".into()));
        }
        let (j, t) = (self.spec.num_joints, self.spec.delta_t);
        if window.shape() != [3, j, t] {
            return Err(Error::shape("predict_window", window.shape(), &[3, j, t]));
        }
        self.forward(window)?.reshape(&[3, j, t])
    }

    /// Post-activation output of the tapped layer for a batch of windows.
    pub fn extract_features(&self, input: &Tensor, tap: Tap) -> Result<Tensor> {
        let idx = self
            .taps
            .get(tap)
            .ok_or_else(|| Error::Param(format!("network {} has no {tap} tap", self.spec.kind)))?;
        self.layer_output(input, idx)
    }

    /// Post-activation output of layer `idx`.
    pub fn layer_output(&self, input: &Tensor, idx: usize) -> Result<Tensor> {
        if idx >= self.layers.len() {
            return Err(Error::Param(format!("layer index {idx} out of range")));
        }
        let mut x = self.as_batch(input)?;
        for l in &self.layers[..=idx] {
            x = l.layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build::build;
    use crate::model::spec::ConvBranchSpec;
    use crate::nn::testutil::random;
    use crate::tensor::SeededRng;

    fn small(kind: ArchKind) -> ArchitectureSpec {
        let mut s = ArchitectureSpec::new(kind);
        s.delta_t = 4;
        s.outer_width = 12;
        s.bottleneck = 5;
        s.conv = vec![
            ConvBranchSpec { filters: 2, width: 2 },
            ConvBranchSpec { filters: 3, width: 4 },
        ];
        s.hierarchy.joint_width = 2;
        s.hierarchy.limb_width = 3;
        s.hierarchy.group_width = 4;
        s.hierarchy.body_width = 12;
        s.init.zero_output = false;
        s
    }

    #[test]
    fn default_encoders_have_full_window_io_and_narrow_middle() {
        for kind in [ArchKind::Ste, ArchKind::Cte, ArchKind::Hte] {
            let net = build(&ArchitectureSpec::new(kind), None).unwrap();
            assert_eq!(net.input_width(), 7200);
            assert_eq!(net.output_width(), 7200);
            assert_eq!(net.tap_width(Tap::Middle), Some(100));
            assert_eq!(
                net.layers()[net.taps().middle.unwrap()].layer.activation(),
                Activation::Linear
            );
            assert_eq!(net.layers().last().unwrap().layer.activation(), Activation::Linear);
        }
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let net = build(&small(ArchKind::Ste), None).unwrap();
        let mut rng = SeededRng::new(1);
        let a = net.predict_window(&random(&mut rng, &[3, 24, 4], 1.0)).unwrap();
        let b = net.predict_window(&random(&mut rng, &[3, 24, 4], 5.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[3, 24, 4]);
    }

    #[test]
    fn predict_window_rejects_bad_shape_and_classifier() {
        let net = build(&small(ArchKind::Hte), None).unwrap();
        assert!(matches!(
            net.predict_window(&Tensor::zeros(&[3, 24, 5])),
            Err(Error::Shape { .. })
        ));
        let clf = build(&ArchitectureSpec::classifier(10, 3), None).unwrap();
        assert!(matches!(
            clf.predict_window(&Tensor::zeros(&[3, 24, 4])),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            clf.extract_features(&Tensor::zeros(&[10]), Tap::Middle),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn batched_forward_equals_looped() {
        let mut rng = SeededRng::new(2);
        for kind in [ArchKind::Ste, ArchKind::Cte, ArchKind::Hte] {
            let net = build(&small(kind), Some(&mut rng)).unwrap();
            let d = net.input_width();
            let x = random(&mut rng, &[6, d], 1.0);
            let batched = net.forward(&x).unwrap();
            for i in 0..6 {
                let w = Tensor::new(&[3, 24, 4], x.row(i).to_vec()).unwrap();
                let single = net.predict_window(&w).unwrap();
                assert_eq!(single.data(), batched.row(i));
            }
        }
    }

    #[test]
    fn extract_then_decode_matches_forward() {
        let mut rng = SeededRng::new(3);
        let net = build(&small(ArchKind::Hte), Some(&mut rng)).unwrap();
        let x = random(&mut rng, &[3, net.input_width()], 1.0);
        let mut h = net.extract_features(&x, Tap::Middle).unwrap();
        for l in &net.layers()[net.taps().middle.unwrap() + 1..] {
            h = l.layer.forward(&h).unwrap();
        }
        assert_eq!(h, net.forward(&x).unwrap());
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn hte_joint_perturbation_reaches_only_its_limb() {
        let spec = small(ArchKind::Hte);
        let h = spec.hierarchy.clone();
        let mut rng = SeededRng::new(4);
        let net = build(&spec, Some(&mut rng)).unwrap();
        let limbs = net.layer_index("limbs").unwrap();
        let x = random(&mut rng, &[1, net.input_width()], 1.0);
        let base = net.layer_output(&x, limbs).unwrap();
        for joint in 0..24 {
            let own = h.limb_of_joint(joint).unwrap();
            let mut xp = x.clone();
            for c in 0..3 {
                for t in 0..spec.delta_t {
                    xp.data_mut()[(c * 24 + joint) * spec.delta_t + t] += 0.5;
                }
            }
            let out = net.layer_output(&xp, limbs).unwrap();
            for l in 0..h.limbs.len() {
                let changed = (0..h.limb_width).any(|v| {
                    let i = l * h.limb_width + v;
                    out.data()[i] != base.data()[i]
                });
                assert_eq!(changed, l == own, "joint {joint} limb {l}");
            }
        }
    }
}
