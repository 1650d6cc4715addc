use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::schema::SkeletonSchema;

/// One captured trial: `frames` is `[T × 3 × N_joints]` in meters, coordinate
/// major within a frame (all x, then all y, then all z).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionRecording {
    pub schema: SkeletonSchema,
    pub fps: u32,
    pub frames: Tensor,
    pub label: Option<String>,
    pub subject: String,
    pub trial: String,
}

/// Descriptive fields of a recording, without the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RecordingHeader {
    pub fps: u32,
    pub schema: SkeletonSchema,
    pub label: Option<String>,
    pub subject: String,
    pub trial: String,
    pub num_frames: usize,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(Error::Data(format!(
            "{what} must be a non-empty token without whitespace, got {s:?}"
        )));
    }
    Ok(())
}

impl MotionRecording {
    pub fn new(
        schema: SkeletonSchema,
        fps: u32,
        frames: Tensor,
        label: Option<String>,
        subject: impl Into<String>,
        trial: impl Into<String>,
    ) -> Result<Self> {
        let rec = Self {
            schema,
            fps,
            frames,
            label,
            subject: subject.into(),
            trial: trial.into(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.schema.num_joints();
        let s = self.frames.shape();
        if s.len() != 3 || s[1] != 3 || s[2] != j {
            return Err(Error::shape("MotionRecording", s, &[0, 3, j]));
        }
        if self.fps == 0 {
            return Err(Error::Data("fps must be positive".into()));
        }
        if !self.frames.all_finite() {
            return Err(Error::Data(format!(
                "recording {}/{} has non-finite coordinates",
                self.subject, self.trial
            )));
        }
        check_token("subject", &self.subject)?;
        check_token("trial", &self.trial)?;
        if let Some(l) = &self.label {
            check_token("label", l)?;
            if l == "-" {
                return Err(Error::Data("label \"-\" is reserved for unlabeled recordings".into()));
            }
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn num_joints(&self) -> usize {
        self.schema.num_joints()
    }

    /// Coordinates of frame `t`, `3·N_joints` values.
    pub fn frame(&self, t: usize) -> &[f64] {
        self.frames.row(t)
    }

    pub fn duration_s(&self) -> f64 {
        self.num_frames() as f64 / self.fps as f64
    }

    pub(crate) fn header(&self) -> RecordingHeader {
        RecordingHeader {
            fps: self.fps,
            schema: self.schema.clone(),
            label: self.label.clone(),
            subject: self.subject.clone(),
            trial: self.trial.clone(),
            num_frames: self.num_frames(),
        }
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Offsets at or below this multiple of the group's largest magnitude are
/// rounding residue and are left alone. This is what makes normalisation an
/// exact fixpoint on its own output.
const RESIDUE: f64 = 64.0 * f64::EPSILON;

/// Subtracts the mean of each group of `n` strided values when it is more than
/// rounding residue. Returns whether anything changed.
fn center_groups(data: &mut [f64], groups: impl Iterator<Item = Vec<usize>>) -> bool {
    let mut changed = false;
    for idx in groups {
        let scale = idx.iter().map(|&i| data[i].abs()).fold(0.0, f64::max);
        let mean = compensated_sum(idx.iter().map(|&i| data[i])) / idx.len() as f64;
        if mean.abs() > RESIDUE * scale {
            for &i in &idx {
                data[i] -= mean;
            }
            changed = true;
        }
    }
    changed
}

/// Removes translation by subtracting each frame's joint centroid (per
/// coordinate), then subtracts the trial-mean pose from every frame.
///
/// Both steps repeat until neither changes anything, so the output is an
/// exact fixed point: normalising twice gives bit-identical frames.
pub fn normalize_recording(rec: &MotionRecording) -> Result<MotionRecording> {
    if !rec.frames.all_finite() {
        return Err(Error::Data(format!(
            "recording {}/{} has non-finite coordinates",
            rec.subject, rec.trial
        )));
    }
    let (t, j) = (rec.num_frames(), rec.num_joints());
    let mut out = rec.clone();
    let data = out.frames.data_mut();
    const MAX_ROUNDS: usize = 32;
    for _ in 0..MAX_ROUNDS {
        let per_frame = (0..t).flat_map(|f| (0..3).map(move |c| (0..j).map(|k| f * 3 * j + c * j + k).collect()));
        let a = center_groups(data, per_frame);
        let per_joint = (0..3 * j).map(|k| (0..t).map(|f| f * 3 * j + k).collect());
        let b = center_groups(data, per_joint);
        if !a && !b {
            return Ok(out);
        }
    }
    Err(Error::Numeric("normalisation did not reach a fixed point".into()))
}

/// Keeps every `fps / target_fps`-th frame starting at frame 0.
pub fn downsample(rec: &MotionRecording, target_fps: u32) -> Result<MotionRecording> {
    if target_fps == 0 || !rec.fps.is_multiple_of(target_fps) {
        return Err(Error::Param(format!(
            "cannot downsample {} fps to {target_fps} fps (ratio must be an integer)",
            rec.fps
        )));
    }
    let step = (rec.fps / target_fps) as usize;
    let j = rec.num_joints();
    let kept: Vec<f64> = (0..rec.num_frames())
        .step_by(step)
        .flat_map(|f| rec.frame(f).iter().copied())
        .collect();
    let n = kept.len() / (3 * j);
    Ok(MotionRecording {
        fps: target_fps,
        frames: Tensor::new(&[n, 3, j], kept)?,
        ..rec.clone()
    })
}
