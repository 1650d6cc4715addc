use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{fill_window, pair_count, zero_joints, MotionRecording};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::tensor::Tensor;

/// Anything that maps a batch of flattened input windows `[B × 3·J·Δt]` to
/// predicted next windows of the same shape.
pub trait WindowPredictor: Sync {
    fn model_id(&self) -> String;
    fn delta_t(&self) -> usize;
    fn num_joints(&self) -> usize;
    fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor>;
}

impl WindowPredictor for Network {
    fn model_id(&self) -> String {
        self.kind().to_string()
    }

    fn delta_t(&self) -> usize {
        self.spec().delta_t
    }

    fn num_joints(&self) -> usize {
        self.spec().num_joints
    }

    fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        if !self.kind().is_temporal_encoder() {
            return Err(Error::Param(format!("{} does not predict windows", self.kind())));
        }
        self.forward(inputs)
    }
}

/// Zero-motion baseline: the last observed frame held for the whole window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersistenceBaseline {
    pub delta_t: usize,
    pub num_joints: usize,
}

impl WindowPredictor for PersistenceBaseline {
    fn model_id(&self) -> String {
        "persistence".into()
    }

    fn delta_t(&self) -> usize {
        self.delta_t
    }

    fn num_joints(&self) -> usize {
        self.num_joints
    }

    fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor> {
        let (d, dt) = (3 * self.num_joints * self.delta_t, self.delta_t);
        if dt == 0 || !inputs.len().is_multiple_of(d) || inputs.is_empty() {
            return Err(Error::shape("persistence", inputs.shape(), &[d]));
        }
        let mut out = inputs.clone().reshape(&[inputs.len() / d, d])?;
        for series in out.data_mut().chunks_mut(dt) {
            let last = series[dt - 1];
            series.fill(last);
        }
        Ok(out)
    }
}

/// Repeats the last frame of `[3 × J × Δt]` `window` across all `Δt` frames.
pub fn persistence_baseline(window: &Tensor) -> Result<Tensor> {
    let s = window.shape();
    if s.len() != 3 || s[0] != 3 || s[2] == 0 {
        return Err(Error::shape("persistence_baseline", s, &[3, 0, 0]));
    }
    let p = PersistenceBaseline {
        delta_t: s[2],
        num_joints: s[1],
    };
    p.predict_batch(window)?.reshape(s)
}

/// Euclidean distance between two frames over all `3·N_joints` coordinates,
/// divided by `n_joints`.
pub fn frame_error(pred: &[f64], gt: &[f64], n_joints: usize) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != 3 * n_joints || n_joints == 0 {
        return Err(Error::shape("frame_error", &[pred.len()], &[gt.len()]));
    }
    let sq: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(sq.sqrt() / n_joints as f64)
}

/// 1-based frame index of a horizon inside a predicted window:
/// `ms · fps / 1000` rounded half to even.
pub fn horizon_frame_index(ms: f64, fps: u32, delta_t: usize) -> Result<usize> {
    if !(ms > 0.0) || !ms.is_finite() || fps == 0 {
        return Err(Error::Param(format!(
            "horizon must be positive, got {ms} ms at {fps} fps"
        )));
    }
    let idx = (ms * fps as f64 / 1000.0).round_ties_even();
    if idx < 1.0 || idx > delta_t as f64 {
        return Err(Error::Param(format!(
            "{ms} ms at {fps} fps is frame {idx}, outside the predicted window of {delta_t} frames"
        )));
    }
    Ok(idx as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub ms: f64,
    /// 1-based index into the predicted window.
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizons: Vec<Horizon>,
    pub mean_error: Vec<f64>,
    pub model_id: String,
    pub recording_set: String,
    pub fps: u32,
    /// Number of predicted windows behind every mean.
    pub samples: usize,
    pub masked_limb: Option<String>,
}

impl HorizonReport {
    /// Aligned text table, one horizon per column.
    pub fn to_table(&self) -> String {
        let heads: Vec<String> = self.horizons.iter().map(|h| format!("{}ms", h.ms)).collect();
        let cells: Vec<String> = self.mean_error.iter().map(|e| format!("{e:.4}")).collect();
        let name = match &self.masked_limb {
            Some(l) => format!("{} (no {l})", self.model_id),
            None => self.model_id.clone(),
        };
        let w0 = name.len().max(5);
        let mut s = format!("{:<w0$}", "model");
        for (h, c) in heads.iter().zip(&cells) {
            let w = h.len().max(c.len());
            let _ = write!(s, "  {h:>w$}");
        }
        let _ = write!(s, "\n{name:<w0$}");
        for (h, c) in heads.iter().zip(&cells) {
            let w = h.len().max(c.len());
            let _ = write!(s, "  {c:>w$}");
        }
        let _ = writeln!(
            s,
            "\n# recordings={} fps={} samples={}",
            self.recording_set, self.fps, self.samples
        );
        s
    }

    /// `horizon_ms,frame_idx,mean_error,n`, one row per horizon.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("horizon_ms,frame_idx,mean_error,n\n");
        for (h, e) in self.horizons.iter().zip(&self.mean_error) {
            let _ = writeln!(s, "{},{},{e:?},{}", h.ms, h.frame, self.samples);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    /// Limb zeroed in every input window; targets are left intact.
    pub mask_limb: Option<String>,
    /// Evaluate every `stride`-th window position.
    pub stride: usize,
    pub batch_size: usize,
    /// Worker threads over recordings. The result does not depend on it.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mask_limb: None,
            stride: 1,
            batch_size: 256,
            threads: 1,
        }
    }
}

/// FNV-1a over the recording identities, as a short stable set id.
pub(crate) fn recording_set_id(recordings: &[MotionRecording]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for r in recordings {
        for b in r.subject.bytes().chain(*b"/").chain(r.trial.bytes()).chain(*b"\n") {
            h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{}x{h:016x}", recordings.len())
}

/// Per-horizon error sums and the window count for one recording.
fn recording_errors<P: WindowPredictor + ?Sized>(
    model: &P,
    rec: &MotionRecording,
    frames: &[usize],
    mask: Option<&[usize]>,
    opts: &EvalOptions,
) -> Result<(Vec<f64>, usize)> {
    let (dt, j) = (model.delta_t(), model.num_joints());
    let d = 3 * j * dt;
    let positions: Vec<usize> = (0..pair_count(rec.num_frames(), dt))
        .step_by(opts.stride)
        .map(|i| dt - 1 + i)
        .collect();
    let mut sums = vec![0.0; frames.len()];
    let mut gt = vec![0.0; 3 * j];
    let mut pred = vec![0.0; 3 * j];
    for chunk in positions.chunks(opts.batch_size.max(1)) {
        let mut x = vec![0.0; chunk.len() * d];
        for (k, &t) in chunk.iter().enumerate() {
            let w = &mut x[k * d..(k + 1) * d];
            fill_window(rec, t + 1 - dt, dt, w);
            if let Some(joints) = mask {
                zero_joints(w, joints, j, dt);
            }
        }
        let y = model.predict_batch(&Tensor::new(&[chunk.len(), d], x)?)?;
        if y.len() != chunk.len() * d {
            return Err(Error::shape("prediction", y.shape(), &[chunk.len(), d]));
        }
        for (k, &t) in chunk.iter().enumerate() {
            let out = &y.data()[k * d..(k + 1) * d];
            for (hi, &h) in frames.iter().enumerate() {
                for (c, v) in pred.iter_mut().enumerate() {
                    *v = out[c * dt + h - 1];
                }
                gt.copy_from_slice(rec.frame(t + h));
                sums[hi] += frame_error(&pred, &gt, j)?;
            }
        }
        if !y.all_finite() {
            return Err(Error::Numeric(format!("non-finite prediction on {}", rec.trial)));
        }
    }
    Ok((sums, positions.len()))
}

/// Slides over every recording, predicts once per window position and
/// averages [`frame_error`] at each horizon over all positions.
pub fn evaluate_horizons<P: WindowPredictor + ?Sized>(
    model: &P,
    recordings: &[MotionRecording],
    horizons_ms: &[f64],
    opts: &EvalOptions,
) -> Result<HorizonReport> {
    let (dt, j) = (model.delta_t(), model.num_joints());
    if opts.stride == 0 {
        return Err(Error::Param("stride must be at least 1".into()));
    }
    let fps = recordings
        .first()
        .ok_or_else(|| Error::Eval("no recordings to evaluate".into()))?
        .fps;
    for r in recordings {
        if r.fps != fps {
            return Err(Error::Eval(format!("mixed frame rates: {} and {fps}", r.fps)));
        }
        if r.num_joints() != j {
            return Err(Error::Eval(format!(
                "{} has {} joints, model expects {j}",
                r.trial,
                r.num_joints()
            )));
        }
    }
    if horizons_ms.is_empty() {
        return Err(Error::Param("no horizons requested".into()));
    }
    let mut horizons = Vec::with_capacity(horizons_ms.len());
    for &ms in horizons_ms {
        let frame = horizon_frame_index(ms, fps, dt)?;
        if horizons.last().is_some_and(|h: &Horizon| h.frame >= frame) {
            return Err(Error::Param(format!(
                "horizons must map to strictly increasing frames; {ms} ms gives frame {frame}"
            )));
        }
        horizons.push(Horizon { ms, frame });
    }
    let frames: Vec<usize> = horizons.iter().map(|h| h.frame).collect();
    let mask = match &opts.mask_limb {
        Some(l) => Some(recordings[0].schema.limb_joints(l)?.to_vec()),
        None => None,
    };

    let per_rec: Vec<Result<(Vec<f64>, usize)>> = if opts.threads <= 1 {
        recordings
            .iter()
            .map(|r| recording_errors(model, r, &frames, mask.as_deref(), opts))
            .collect()
    } else {
        let chunk = recordings.len().div_ceil(opts.threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = recordings
                .chunks(chunk)
                .map(|part| {
                    let (frames, mask) = (&frames, mask.as_deref());
                    s.spawn(move || {
                        part.iter()
                            .map(|r| recording_errors(model, r, frames, mask, opts))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };

    let mut sums = vec![0.0; frames.len()];
    let mut n = 0;
    for r in per_rec {
        let (s, k) = r?;
        sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        n += k;
    }
    if n == 0 {
        return Err(Error::Eval(format!(
            "no recording is long enough for a window pair ({} frames needed)",
            2 * dt
        )));
    }
    Ok(HorizonReport {
        horizons,
        mean_error: sums.iter().map(|s| s / n as f64).collect(),
        model_id: model.model_id(),
        recording_set: recording_set_id(recordings),
        fps,
        samples: n,
        masked_limb: opts.mask_limb.clone(),
    })
}

/// [`evaluate_horizons`] with `limb` zeroed in every input window.
pub fn evaluate_missing_limb<P: WindowPredictor + ?Sized>(
    model: &P,
    recordings: &[MotionRecording],
    limb: &str,
    horizons_ms: &[f64],
    opts: &EvalOptions,
) -> Result<HorizonReport> {
    let opts = EvalOptions {
        mask_limb: Some(limb.to_string()),
        ..opts.clone()
    };
    evaluate_horizons(model, recordings, horizons_ms, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_window_pairs, normalize_recording, synth_dataset, SkeletonSchema, SynthAction};
    use crate::nn::testutil::random;
    use crate::tensor::SeededRng;
    use proptest::prelude::*;

    fn rec_from(frames: Tensor, fps: u32) -> MotionRecording {
        MotionRecording::new(SkeletonSchema::default(), fps, frames, None, "s", "t").unwrap()
    }

    #[test]
    fn frame_error_cases() {
        let gt = vec![0.5; 72];
        assert_eq!(frame_error(&gt, &gt, 24).unwrap(), 0.0);
        let mut p = gt.clone();
        p[7] += 3.0;
        p[24 + 7] += 4.0;
        assert_eq!(frame_error(&p, &gt, 24).unwrap(), 5.0 / 24.0);
        assert!(matches!(frame_error(&p[..71], &gt, 24), Err(Error::Shape { .. })));
        assert!(frame_error(&gt, &gt, 23).is_err());
    }

    #[test]
    fn horizon_indices() {
        assert_eq!(horizon_frame_index(1000.0, 60, 100).unwrap(), 60);
        assert_eq!(horizon_frame_index(80.0, 60, 100).unwrap(), 5);
        assert_eq!(horizon_frame_index(1600.0, 60, 100).unwrap(), 96);
        // 2.5 and 3.5 frames
        assert_eq!(horizon_frame_index(250.0, 10, 10).unwrap(), 2);
        assert_eq!(horizon_frame_index(350.0, 10, 10).unwrap(), 4);
        assert!(horizon_frame_index(1700.0, 60, 100).is_err());
        assert!(horizon_frame_index(0.0, 60, 100).is_err());
        assert!(horizon_frame_index(5.0, 60, 100).is_err());
    }

    #[test]
    fn persistence_contract() {
        let mut rng = SeededRng::new(1);
        let w = random(&mut rng, &[3, 4, 5], 1.0);
        let p = persistence_baseline(&w).unwrap();
        for k in 0..12 {
            let s = &p.data()[k * 5..(k + 1) * 5];
            assert!(s.iter().all(|v| *v == w.data()[k * 5 + 4]));
        }
        let c = Tensor::full(&[3, 4, 5], 0.25);
        assert_eq!(persistence_baseline(&c).unwrap(), c);
    }

    #[test]
    fn persistence_on_constant_recording_is_exact() {
        let rec = rec_from(Tensor::full(&[40, 3, 24], 0.3), 10);
        let m = PersistenceBaseline {
            delta_t: 10,
            num_joints: 24,
        };
        let r = evaluate_horizons(&m, &[rec], &[100.0, 500.0, 1000.0], &EvalOptions::default()).unwrap();
        assert_eq!(r.mean_error, vec![0.0; 3]);
        assert_eq!(r.samples, 21);
    }

    #[test]
    fn persistence_error_is_linear_in_horizon_on_a_line() {
        // one joint moves at 0.01 m/frame along x, the rest stand still
        let mut f = Tensor::zeros(&[60, 3, 24]);
        for t in 0..60 {
            f.set(&[t, 0, 3], 0.01 * t as f64);
        }
        let m = PersistenceBaseline {
            delta_t: 20,
            num_joints: 24,
        };
        let hs = [100.0, 200.0, 500.0, 1000.0];
        let r = evaluate_horizons(&m, &[rec_from(f, 20)], &hs, &EvalOptions::default()).unwrap();
        for (h, e) in r.horizons.iter().zip(&r.mean_error) {
            assert!((e - 0.01 * h.frame as f64 / 24.0).abs() < 1e-12, "{h:?} {e}");
        }
    }

    #[test]
    fn persistence_error_grows_with_horizon_on_walks() {
        let recs: Vec<_> = synth_dataset(&[SynthAction::Walk], 3, 6.0, 30, 4)
            .unwrap()
            .iter()
            .map(|r| normalize_recording(r).unwrap())
            .collect();
        let m = PersistenceBaseline {
            delta_t: 50,
            num_joints: 24,
        };
        let r = evaluate_horizons(&m, &recs, &[80.0, 160.0, 320.0, 560.0], &EvalOptions::default()).unwrap();
        assert!(r.mean_error.windows(2).all(|w| w[0] < w[1]), "{:?}", r.mean_error);
    }

    /// Explicit (window, horizon) list, independent of the batching above.
    fn brute_force(
        model: &dyn WindowPredictor,
        recs: &[MotionRecording],
        frames: &[usize],
        mask: Option<&str>,
    ) -> Vec<f64> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in recs {
            for pair in make_window_pairs(rec, model.delta_t()) {
                let input = match mask {
                    Some(l) => crate::data::mask_limb(&pair.input, l, &rec.schema).unwrap(),
                    None => pair.input.clone(),
                };
                let out = model.predict_batch(&input).unwrap();
                let dt = model.delta_t();
                rows.push(
                    frames
                        .iter()
                        .map(|&h| {
                            let mut sq = 0.0;
                            for k in 0..3 * rec.num_joints() {
                                let d = out.data()[k * dt + h - 1] - pair.target.data()[k * dt + h - 1];
                                sq += d * d;
                            }
                            sq.sqrt() / rec.num_joints() as f64
                        })
                        .collect(),
                );
            }
        }
        (0..frames.len())
            .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
            .collect()
    }

    struct Affine(Tensor);

    impl WindowPredictor for Affine {
        fn model_id(&self) -> String {
            "affine".into()
        }
        fn delta_t(&self) -> usize {
            4
        }
        fn num_joints(&self) -> usize {
            24
        }
        fn predict_batch(&self, x: &Tensor) -> Result<Tensor> {
            let x = x.clone().reshape(&[x.len() / 288, 288])?;
            x.matmul(&self.0)
        }
    }

    #[test]
    fn matches_brute_force_and_is_thread_independent() {
        let mut rng = SeededRng::new(9);
        let model = Affine(random(&mut rng, &[288, 288], 0.05));
        let recs: Vec<_> = [13, 8, 20, 5]
            .iter()
            .map(|&t| rec_from(random(&mut rng, &[t, 3, 24], 1.0), 25))
            .collect();
        let hs = [40.0, 80.0, 160.0];
        for mask in [None, Some("left_leg")] {
            let opts = EvalOptions {
                mask_limb: mask.map(str::to_string),
                batch_size: 3,
                ..EvalOptions::default()
            };
            let r = evaluate_horizons(&model, &recs, &hs, &opts).unwrap();
            let want = brute_force(&model, &recs, &[1, 2, 4], mask);
            for (a, b) in r.mean_error.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} {b}");
            }
            assert_eq!(r.samples, 6 + 1 + 13);
            let par = evaluate_horizons(&model, &recs, &hs, &EvalOptions { threads: 3, ..opts }).unwrap();
            assert_eq!(par, r);
        }
    }

    #[test]
    fn errors() {
        let m = PersistenceBaseline {
            delta_t: 10,
            num_joints: 24,
        };
        let short = rec_from(Tensor::zeros(&[19, 3, 24]), 10);
        assert!(matches!(
            evaluate_horizons(&m, std::slice::from_ref(&short), &[100.0], &EvalOptions::default()),
            Err(Error::Eval(_))
        ));
        assert!(matches!(
            evaluate_horizons(&m, &[], &[100.0], &EvalOptions::default()),
            Err(Error::Eval(_))
        ));
        let ok = rec_from(Tensor::zeros(&[20, 3, 24]), 10);
        assert!(matches!(
            evaluate_missing_limb(&m, std::slice::from_ref(&ok), "tail", &[100.0], &EvalOptions::default()),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            evaluate_horizons(&m, std::slice::from_ref(&ok), &[200.0, 100.0], &EvalOptions::default()),
            Err(Error::Param(_))
        ));
        assert!(evaluate_horizons(&m, &[ok, short], &[100.0], &EvalOptions::default()).is_ok());
    }

    #[test]
    fn report_formats() {
        let r = HorizonReport {
            horizons: vec![Horizon { ms: 80.0, frame: 5 }, Horizon { ms: 1000.0, frame: 60 }],
            mean_error: vec![0.125, 1.5],
            model_id: "H-TE".into(),
            recording_set: "2x0".into(),
            fps: 60,
            samples: 7,
            masked_limb: None,
        };
        assert_eq!(
            r.to_csv(),
            "horizon_ms,frame_idx,mean_error,n\n80,5,0.125,7\n1000,60,1.5,7\n"
        );
        let t = r.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "model    80ms  1000ms");
        assert_eq!(lines[1], "H-TE   0.1250  1.5000");
        assert_eq!(lines[2], "# recordings=2x0 fps=60 samples=7");
    }

    proptest! {
        #[test]
        fn frame_error_is_a_metric(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let f: Vec<Vec<f64>> = (0..3).map(|_| (0..15).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
            let d = |a: &[f64], b: &[f64]| frame_error(a, b, 5).unwrap();
            prop_assert_eq!(d(&f[0], &f[1]), d(&f[1], &f[0]));
            prop_assert_eq!(d(&f[0], &f[0]), 0.0);
            prop_assert!(d(&f[0], &f[1]) > 0.0);
            prop_assert!(d(&f[0], &f[2]) <= d(&f[0], &f[1]) + d(&f[1], &f[2]) + 1e-15);
            let oracle = {
                let mut s = 0.0;
                for k in 0..15 {
                    s += (f[0][k] - f[1][k]).powi(2);
                }
                s.sqrt() / 5.0
            };
            prop_assert!((d(&f[0], &f[1]) - oracle).abs() < 1e-12);
        }
    }
}
