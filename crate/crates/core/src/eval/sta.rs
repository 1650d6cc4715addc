use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::Activation;
use crate::tensor::Tensor;

pub const DEFAULT_STA_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct StaResult {
    pub layer: String,
    pub unit: usize,
    /// Activity-weighted mean input window `[3 × J × Δt]`; `None` when no
    /// window drove the unit above the threshold.
    pub average: Option<Tensor>,
    pub count: usize,
    pub threshold: f64,
    /// Sum of the qualifying activities.
    pub total_activity: f64,
}

impl StaResult {
    pub fn is_empty(&self) -> bool {
        self.average.is_none()
    }
}

/// Spike-triggered averages of several units of one sigmoid layer. Windows
/// (`[B × 3·J·Δt]`) where a unit's activity `a` exceeds `threshold` are
/// averaged with weight `a`.
pub fn spike_triggered_averages(
    net: &Network,
    windows: &Tensor,
    layer: &str,
    units: &[usize],
    threshold: f64,
) -> Result<Vec<StaResult>> {
    let idx = net
        .layer_index(layer)
        .ok_or_else(|| Error::Param(format!("no layer named {layer:?}")))?;
    let l = &net.layers()[idx].layer;
    if l.activation() != Activation::Sigmoid {
        return Err(Error::Param(format!("layer {layer:?} is not a sigmoid layer")));
    }
    if let Some(&u) = units.iter().find(|&&u| u >= l.out_width()) {
        return Err(Error::Param(format!(
            "layer {layer:?} has {} units, asked for {u}",
            l.out_width()
        )));
    }
    let d = net.input_width();
    if windows.shape().len() != 2 || windows.row_len() != d {
        return Err(Error::shape("spike_triggered_average", windows.shape(), &[0, d]));
    }
    let acts = net.layer_output(windows, idx)?;
    let width = acts.row_len();
    let (j, dt) = (net.spec().num_joints, net.spec().delta_t);
    units
        .iter()
        .map(|&u| {
            let mut sum = vec![0.0; d];
            let (mut total, mut count) = (0.0, 0);
            for b in 0..windows.rows() {
                let a = acts.data()[b * width + u];
                if a > threshold {
                    sum.iter_mut().zip(windows.row(b)).for_each(|(s, x)| *s += a * x);
                    total += a;
                    count += 1;
                }
            }
            let average = if count == 0 {
                None
            } else {
                sum.iter_mut().for_each(|s| *s /= total);
                Some(Tensor::new(&[3, j, dt], sum)?)
            };
            Ok(StaResult {
                layer: layer.to_string(),
                unit: u,
                average,
                count,
                threshold,
                total_activity: total,
            })
        })
        .collect()
}

pub fn spike_triggered_average(
    net: &Network,
    windows: &Tensor,
    layer: &str,
    unit: usize,
    threshold: f64,
) -> Result<StaResult> {
    let mut v = spike_triggered_averages(net, windows, layer, &[unit], threshold)?;
    Ok(v.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, ArchKind, ArchitectureSpec, NetLayer};
    use crate::nn::testutil::random;
    use crate::nn::{DenseLayer, Layer};
    use crate::tensor::SeededRng;
    use proptest::prelude::*;

    fn small(rng: &mut SeededRng) -> Network {
        let mut s = ArchitectureSpec::new(ArchKind::Ste);
        s.num_joints = 2;
        s.delta_t = 3;
        s.outer_width = 5;
        s.bottleneck = 3;
        s.hierarchy = crate::model::HierarchySpec::single_limb(2);
        build(&s, Some(rng)).unwrap()
    }

    /// Sets layer `lower` to a constant pre-activation `z` for unit 0 and, for
    /// unit 1, to `x[0]` so activities can be dialled per window.
    fn dial(net: &mut Network, z: f64) {
        let d = net.input_width();
        let mut w = Tensor::zeros(&[d, 5]);
        w.set(&[0, 1], 1.0);
        let mut b = Tensor::zeros(&[5]);
        b.set(&[0], z);
        net.layers_mut()[0] = NetLayer {
            name: "lower".into(),
            layer: Layer::Dense(DenseLayer::new(w, b, Activation::Sigmoid).unwrap()),
        };
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn constant_activity_gives_plain_mean() {
        let mut rng = SeededRng::new(1);
        let mut net = small(&mut rng);
        dial(&mut net, logit(0.9));
        let x = random(&mut rng, &[7, 18], 1.0);
        let r = spike_triggered_average(&net, &x, "lower", 0, 0.8).unwrap();
        assert_eq!(r.count, 7);
        let avg = r.average.unwrap();
        for k in 0..18 {
            let mean = (0..7).map(|b| x.row(b)[k]).sum::<f64>() / 7.0;
            assert!((avg.data()[k] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_windows_by_hand_and_empty_case() {
        let mut rng = SeededRng::new(2);
        let mut net = small(&mut rng);
        dial(&mut net, 0.0);
        let mut x = random(&mut rng, &[3, 18], 1.0);
        x.set(&[0, 0], logit(0.9));
        x.set(&[1, 0], logit(0.81));
        x.set(&[2, 0], logit(0.5));
        let r = spike_triggered_average(&net, &x, "lower", 1, 0.8).unwrap();
        assert_eq!(r.count, 2);
        let avg = r.average.unwrap();
        for k in 0..18 {
            let want = (0.9 * x.row(0)[k] + 0.81 * x.row(1)[k]) / 1.71;
            assert!((avg.data()[k] - want).abs() < 1e-12);
        }
        let none = spike_triggered_average(&net, &x, "lower", 0, 0.8).unwrap();
        assert!(none.is_empty() && none.count == 0 && none.total_activity == 0.0);
    }

    #[test]
    fn rejects_linear_layers_and_bad_units() {
        let mut rng = SeededRng::new(3);
        let net = small(&mut rng);
        let x = random(&mut rng, &[2, 18], 1.0);
        assert!(matches!(
            spike_triggered_average(&net, &x, "bottleneck", 0, 0.8),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            spike_triggered_average(&net, &x, "lower", 5, 0.8),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            spike_triggered_average(&net, &x, "nope", 0, 0.8),
            Err(Error::Param(_))
        ));
        assert!(spike_triggered_average(&net, &x, "upper", 0, 0.8).is_ok());
    }

    proptest! {
        #[test]
        fn average_lies_between_contributors(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let net = small(&mut rng);
            let x = random(&mut rng, &[20, 18], 3.0);
            let acts = net.layer_output(&x, 0).unwrap();
            for r in spike_triggered_averages(&net, &x, "lower", &[0, 1, 2, 3, 4], 0.6).unwrap() {
                let Some(avg) = r.average else { continue };
                let rows: Vec<usize> = (0..20).filter(|&b| acts.row(b)[r.unit] > 0.6).collect();
                for k in 0..18 {
                    let lo = rows.iter().map(|&b| x.row(b)[k]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|&b| x.row(b)[k]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(avg.data()[k] >= lo - 1e-12 && avg.data()[k] <= hi + 1e-12);
                }
            }
        }
    }
}
