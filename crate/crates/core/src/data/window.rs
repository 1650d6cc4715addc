use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

use super::recording::MotionRecording;
use super::schema::SkeletonSchema;

/// An input window and the window that immediately follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// `[3 × N_joints × Δt]`, frames `t−Δt+1 ..= t`.
    pub input: Tensor,
    /// `[3 × N_joints × Δt]`, frames `t+1 ..= t+Δt`.
    pub target: Tensor,
    /// Zero-based index of the input window's last frame.
    pub t: usize,
    pub recording: usize,
}

/// Number of pairs a recording of `num_frames` frames yields.
pub fn pair_count(num_frames: usize, delta_t: usize) -> usize {
    (num_frames + 1).saturating_sub(2 * delta_t)
}

/// Copies frames `start .. start + delta_t` into window layout
/// `[(c · J + j) · Δt + s]`.
pub(crate) fn fill_window(rec: &MotionRecording, start: usize, delta_t: usize, out: &mut [f64]) {
    let cj = 3 * rec.num_joints();
    for s in 0..delta_t {
        for (k, v) in rec.frame(start + s).iter().enumerate() {
            out[k * delta_t + s] = *v;
        }
    }
    debug_assert_eq!(out.len(), cj * delta_t);
}

/// Extracts the `[3 × J × Δt]` window whose first frame is `start`.
pub fn extract_window(rec: &MotionRecording, start: usize, delta_t: usize) -> Result<Tensor> {
    if delta_t == 0 || start + delta_t > rec.num_frames() {
        return Err(Error::Param(format!(
            "window [{start}, {}) exceeds recording of {} frames",
            start + delta_t,
            rec.num_frames()
        )));
    }
    let mut buf = vec![0.0; 3 * rec.num_joints() * delta_t];
    fill_window(rec, start, delta_t, &mut buf);
    Tensor::new(&[3, rec.num_joints(), delta_t], buf)
}

/// Converts a `[3 × J × Δt]` window back to frame layout `[Δt × 3 × J]`.
pub fn window_frames(window: &Tensor) -> Result<Tensor> {
    let s = window.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::shape("window_frames", s, &[3, 0, 0]));
    }
    let (cj, dt) = (3 * s[1], s[2]);
    let mut out = vec![0.0; window.len()];
    for k in 0..cj {
        for t in 0..dt {
            out[t * cj + k] = window.data()[k * dt + t];
        }
    }
    Tensor::new(&[dt, 3, s[1]], out)
}

/// All pairs of one recording, `t ∈ [Δt−1, T−Δt−1]`. A recording shorter than
/// `2·Δt` yields no pairs.
pub fn make_window_pairs(rec: &MotionRecording, delta_t: usize) -> Vec<WindowPair> {
    if delta_t == 0 {
        return Vec::new();
    }
    let n = pair_count(rec.num_frames(), delta_t);
    (0..n)
        .map(|i| {
            let t = delta_t - 1 + i;
            WindowPair {
                input: extract_window(rec, t + 1 - delta_t, delta_t).expect("in range"),
                target: extract_window(rec, t + 1, delta_t).expect("in range"),
                t,
                recording: 0,
            }
        })
        .collect()
}

/// Random-access source of training pairs, materialised on demand.
pub trait PairSet: Sync {
    fn len(&self) -> usize;
    fn delta_t(&self) -> usize;
    fn num_joints(&self) -> usize;
    /// Writes pair `i` into `input` and `target` (each `3·J·Δt` values).
    fn fill(&self, i: usize, input: &mut [f64], target: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn window_size(&self) -> usize {
        3 * self.num_joints() * self.delta_t()
    }

    /// Gathers the pairs at `indices` into `[B × D]` input and target batches.
    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let d = self.window_size();
        let mut x = vec![0.0; indices.len() * d];
        let mut y = vec![0.0; indices.len() * d];
        for (k, &i) in indices.iter().enumerate() {
            self.fill(i, &mut x[k * d..(k + 1) * d], &mut y[k * d..(k + 1) * d]);
        }
        Ok((
            Tensor::new(&[indices.len(), d], x)?,
            Tensor::new(&[indices.len(), d], y)?,
        ))
    }
}

impl PairSet for [WindowPair] {
    fn len(&self) -> usize {
        <[WindowPair]>::len(self)
    }

    fn delta_t(&self) -> usize {
        self.first().map_or(0, |p| p.input.shape()[2])
    }

    fn num_joints(&self) -> usize {
        self.first().map_or(0, |p| p.input.shape()[1])
    }

    fn fill(&self, i: usize, input: &mut [f64], target: &mut [f64]) {
        input.copy_from_slice(self[i].input.data());
        target.copy_from_slice(self[i].target.data());
    }
}

/// Lazy pair index over a set of recordings. Only `(recording, t)` is stored;
/// windows are copied out of the frames when requested.
#[derive(Debug, Clone)]
pub struct WindowIndex {
    recordings: Vec<MotionRecording>,
    entries: Vec<(usize, usize)>,
    delta_t: usize,
}

impl WindowIndex {
    /// Indexes every `stride`-th pair of each recording. Recordings too short
    /// for a single pair contribute nothing and are counted in
    /// [`WindowIndex::skipped`].
    pub fn new(recordings: Vec<MotionRecording>, delta_t: usize, stride: usize) -> Result<Self> {
        if delta_t == 0 || stride == 0 {
            return Err(Error::Param("delta_t and stride must be positive".into()));
        }
        if let Some(first) = recordings.first() {
            if recordings.iter().any(|r| r.schema != first.schema) {
                return Err(Error::Data("recordings use different skeleton schemas".into()));
            }
        }
        let mut entries = Vec::new();
        for (r, rec) in recordings.iter().enumerate() {
            let n = pair_count(rec.num_frames(), delta_t);
            entries.extend((0..n).step_by(stride).map(|i| (r, delta_t - 1 + i)));
        }
        Ok(Self {
            recordings,
            entries,
            delta_t,
        })
    }

    pub fn recordings(&self) -> &[MotionRecording] {
        &self.recordings
    }

    /// `(recording, t)` of every indexed pair.
    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    /// Recordings that yielded no pairs.
    pub fn skipped(&self) -> usize {
        self.recordings
            .iter()
            .filter(|r| pair_count(r.num_frames(), self.delta_t) == 0)
            .count()
    }

    pub fn pair(&self, i: usize) -> WindowPair {
        let (r, t) = self.entries[i];
        let rec = &self.recordings[r];
        WindowPair {
            input: extract_window(rec, t + 1 - self.delta_t, self.delta_t).expect("indexed"),
            target: extract_window(rec, t + 1, self.delta_t).expect("indexed"),
            t,
            recording: r,
        }
    }
}

impl PairSet for WindowIndex {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn delta_t(&self) -> usize {
        self.delta_t
    }

    fn num_joints(&self) -> usize {
        self.recordings.first().map_or(0, |r| r.num_joints())
    }

    fn fill(&self, i: usize, input: &mut [f64], target: &mut [f64]) {
        let (r, t) = self.entries[i];
        let rec = &self.recordings[r];
        fill_window(rec, t + 1 - self.delta_t, self.delta_t, input);
        fill_window(rec, t + 1, self.delta_t, target);
    }
}

/// Uniform random permutation drawn from `rng`.
pub fn shuffle_dataset<T>(mut items: Vec<T>, rng: &mut SeededRng) -> Vec<T> {
    rng.shuffle(&mut items);
    items
}

/// Zeroes the given joints in a flat `[3 × J × Δt]` window, in place.
pub(crate) fn zero_joints(window: &mut [f64], joints: &[usize], num_joints: usize, delta_t: usize) {
    for c in 0..3 {
        for &j in joints {
            let at = (c * num_joints + j) * delta_t;
            window[at..at + delta_t].fill(0.0);
        }
    }
}

/// Copy of `window` (`[3 × J × Δt]`) with every coordinate of `limb`'s joints
/// set to zero at all frames.
pub fn mask_limb(window: &Tensor, limb: &str, schema: &SkeletonSchema) -> Result<Tensor> {
    let j = schema.num_joints();
    let s = window.shape();
    if s.len() != 3 || s[0] != 3 || s[1] != j {
        return Err(Error::shape("mask_limb", s, &[3, j, 0]));
    }
    let joints = schema.limb_joints(limb)?;
    let mut out = window.clone();
    zero_joints(out.data_mut(), joints, j, s[2]);
    Ok(out)
}
