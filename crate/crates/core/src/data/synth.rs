//! Procedural motion for tests and demos.
//!
//! Each action moves a 24-joint rest pose with a few per-joint sinusoids. The
//! dominant frequency bands are disjoint between actions (turn ~0.3 Hz, squat
//! ~0.5 Hz, walk ~1 Hz, wave ~1.6 Hz, box ~2.4 Hz, each ±10%), and every
//! recording draws its own frequency, amplitude, phase and body scale.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

use super::recording::MotionRecording;
use super::schema::SkeletonSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthAction {
    Walk,
    Wave,
    Box,
    Squat,
    Turn,
}

impl SynthAction {
    pub const ALL: [SynthAction; 5] = [
        SynthAction::Walk,
        SynthAction::Wave,
        SynthAction::Box,
        SynthAction::Squat,
        SynthAction::Turn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthAction::Walk => "walk",
            SynthAction::Wave => "wave",
            SynthAction::Box => "box",
            SynthAction::Squat => "squat",
            SynthAction::Turn => "turn",
        }
    }

    /// Nominal dominant frequency in Hz.
    pub fn base_frequency(self) -> f64 {
        match self {
            SynthAction::Walk => 1.0,
            SynthAction::Wave => 1.6,
            SynthAction::Box => 2.4,
            SynthAction::Squat => 0.5,
            SynthAction::Turn => 0.3,
        }
    }
}

impl fmt::Display for SynthAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthAction::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown action {s:?} (expected walk|wave|box|squat|turn)")))
    }
}

/// Rest pose in meters, y up, facing +z.
const REST: [[f64; 3]; 24] = [
    [0.0, 0.90, 0.0],    // pelvis
    [0.09, 0.82, 0.0],   // left_hip
    [-0.09, 0.82, 0.0],  // right_hip
    [0.0, 1.00, 0.0],    // spine1
    [0.10, 0.48, 0.02],  // left_knee
    [-0.10, 0.48, 0.02], // right_knee
    [0.0, 1.12, 0.0],    // spine2
    [0.10, 0.08, -0.02], // left_ankle
    [-0.10, 0.08, -0.02],
    [0.0, 1.20, 0.0], // spine3
    [0.10, 0.02, 0.10],
    [-0.10, 0.02, 0.10],
    [0.0, 1.42, 0.0], // neck
    [0.08, 1.36, 0.0],
    [-0.08, 1.36, 0.0],
    [0.0, 1.60, 0.02], // head
    [0.18, 1.38, 0.0], // left_shoulder
    [-0.18, 1.38, 0.0],
    [0.22, 1.12, 0.0], // left_elbow
    [-0.22, 1.12, 0.0],
    [0.24, 0.88, 0.02], // left_wrist
    [-0.24, 0.88, 0.02],
    [0.24, 0.80, 0.04], // left_hand
    [-0.24, 0.80, 0.04],
];

const L_LEG: [usize; 4] = [1, 4, 7, 10];
const R_LEG: [usize; 4] = [2, 5, 8, 11];
const L_ARM: [usize; 4] = [16, 18, 20, 22];
const R_ARM: [usize; 4] = [17, 19, 21, 23];
const UPPER_BODY: [usize; 14] = [0, 3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21];

/// Jitter standard deviation in meters.
pub const SYNTH_JITTER: f64 = 0.003;

struct Params {
    freq: f64,
    amp: f64,
    phase: f64,
    scale: f64,
}

/// Displacement `[x, y, z]` of every joint at time `s` seconds.
fn pose(action: SynthAction, p: &Params, s: f64, out: &mut [[f64; 3]; 24]) {
    for (o, r) in out.iter_mut().zip(REST.iter()) {
        *o = r.map(|v| v * p.scale);
    }
    let w = TAU * p.freq * s + p.phase;
    let a = p.amp;
    // distal joints swing further
    let reach = [0.4, 0.75, 1.0, 1.1];
    match action {
        SynthAction::Walk => {
            for (k, (&l, &r)) in L_LEG.iter().zip(&R_LEG).enumerate() {
                out[l][2] += 0.35 * a * reach[k] * w.sin();
                out[r][2] -= 0.35 * a * reach[k] * w.sin();
                if k >= 2 {
                    out[l][1] += 0.05 * a * (w.cos()).max(0.0);
                    out[r][1] += 0.05 * a * (-w.cos()).max(0.0);
                }
            }
            for (k, (&l, &r)) in L_ARM.iter().zip(&R_ARM).enumerate() {
                out[l][2] -= 0.18 * a * reach[k] * w.sin();
                out[r][2] += 0.18 * a * reach[k] * w.sin();
            }
            for &j in &UPPER_BODY {
                out[j][1] += 0.02 * a * (2.0 * w).cos();
            }
            // steady forward progress; removed again by normalisation
            for o in out.iter_mut() {
                o[2] += 1.1 * s;
            }
        }
        SynthAction::Wave => {
            // right arm raised, forearm swinging sideways
            out[19][1] += 0.30 * p.scale;
            out[21][1] += 0.62 * p.scale;
            out[23][1] += 0.72 * p.scale;
            out[19][0] -= 0.04 * a * w.sin();
            out[21][0] -= 0.18 * a * w.sin();
            out[23][0] -= 0.22 * a * w.sin();
            out[21][1] += 0.03 * a * (2.0 * w).cos();
            out[23][1] += 0.04 * a * (2.0 * w).cos();
        }
        SynthAction::Box => {
            for (k, (&l, &r)) in L_ARM.iter().zip(&R_ARM).enumerate().skip(1) {
                let ext = [0.0, 0.12, 0.30, 0.34][k];
                out[l][2] += ext * a * (0.5 + 0.5 * w.sin());
                out[r][2] += ext * a * (0.5 - 0.5 * w.sin());
                out[l][1] += 0.15 * p.scale;
                out[r][1] += 0.15 * p.scale;
            }
            for &j in &[3, 6, 9, 12, 15] {
                out[j][0] += 0.02 * a * w.sin();
            }
        }
        SynthAction::Squat => {
            let depth = 0.5 - 0.5 * w.cos();
            for &j in &UPPER_BODY {
                out[j][1] -= 0.28 * a * depth;
            }
            for &j in &[4, 5] {
                out[j][1] -= 0.12 * a * depth;
                out[j][2] += 0.14 * a * depth;
            }
            for &j in &[20, 21, 22, 23] {
                out[j][2] += 0.25 * a * depth;
            }
        }
        SynthAction::Turn => {
            let angle = w;
            let (sin, cos) = angle.sin_cos();
            for o in out.iter_mut() {
                let (x, z) = (o[0], o[2]);
                o[0] = cos * x + sin * z;
                o[2] = -sin * x + cos * z;
            }
        }
    }
}

/// Generates `duration_s` seconds of `action` at `fps` on the default 24-joint
/// schema. Bit-identical for identical rng state.
pub fn synth_generate(action: SynthAction, duration_s: f64, fps: u32, rng: &mut SeededRng) -> Result<MotionRecording> {
    if fps == 0 || !duration_s.is_finite() {
        return Err(Error::Param("fps must be positive and duration finite".into()));
    }
    let t = (duration_s * fps as f64).round();
    if t < 1.0 {
        return Err(Error::Param(format!(
            "{duration_s} s at {fps} fps is less than one frame"
        )));
    }
    let t = t as usize;
    let p = Params {
        freq: action.base_frequency() * rng.uniform_range(0.9, 1.1),
        amp: rng.uniform_range(0.85, 1.15),
        phase: rng.uniform_range(0.0, TAU),
        scale: rng.uniform_range(0.95, 1.05),
    };
    let id = rng.next_u32();
    let mut frame = [[0.0; 3]; 24];
    let mut data = vec![0.0; t * 72];
    for f in 0..t {
        pose(action, &p, f as f64 / fps as f64, &mut frame);
        let row = &mut data[f * 72..(f + 1) * 72];
        for c in 0..3 {
            for j in 0..24 {
                row[c * 24 + j] = frame[j][c] + rng.normal(0.0, SYNTH_JITTER);
            }
        }
    }
    MotionRecording::new(
        SkeletonSchema::default(),
        fps,
        Tensor::new(&[t, 3, 24], data)?,
        Some(action.name().to_string()),
        "synth",
        format!("{action}_{id:08x}"),
    )
}

/// `per_action` recordings of each action, each from its own forked stream of
/// `seed`, ordered action-major.
pub fn synth_dataset(
    actions: &[SynthAction],
    per_action: usize,
    duration_s: f64,
    fps: u32,
    seed: u64,
) -> Result<Vec<MotionRecording>> {
    let root = SeededRng::new(seed);
    let mut out = Vec::with_capacity(actions.len() * per_action);
    for &a in actions {
        for i in 0..per_action {
            let stream = (a as u64) << 32 | i as u64;
            out.push(synth_generate(a, duration_s, fps, &mut root.fork(stream))?);
        }
    }
    Ok(out)
}

/// Mean over the given joints and all three coordinates of the per-coordinate
/// temporal variance.
pub fn joint_variance(rec: &MotionRecording, joints: &[usize]) -> f64 {
    let (t, j) = (rec.num_frames(), rec.num_joints());
    let mut total = 0.0;
    for &joint in joints {
        for c in 0..3 {
            let vals = (0..t).map(|f| rec.frame(f)[c * j + joint]);
            let mean = vals.clone().sum::<f64>() / t as f64;
            total += vals.map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        }
    }
    total / (3 * joints.len()) as f64
}
