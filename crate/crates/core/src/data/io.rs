//! Motion files.
//!
//! Text: `#motenc v1`, a `key=value` header line, then one frame per row with
//! `3·N_joints` space-separated values (all x, all y, all z). Values are
//! written with shortest round-trip formatting, so text files are lossless.
//!
//! Binary: the shared container with magic `MREC`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::container;
use crate::error::{CheckpointError, Error, Result};
use crate::tensor::Tensor;

use super::recording::{MotionRecording, RecordingHeader};
use super::schema::SkeletonSchema;

pub const TEXT_MAGIC: &str = "#motenc v1";
pub const MOTION_MAGIC: [u8; 4] = *b"MREC";
pub const MOTION_VERSION: u32 = 1;

pub fn motion_to_text(rec: &MotionRecording) -> String {
    let mut s = String::new();
    s.push_str(TEXT_MAGIC);
    s.push('\n');
    let _ = writeln!(
        s,
        "fps={} joints={} label={} subject={} trial={}",
        rec.fps,
        rec.schema.joint_names().join(","),
        rec.label.as_deref().unwrap_or("-"),
        rec.subject,
        rec.trial
    );
    for f in 0..rec.num_frames() {
        for (k, v) in rec.frame(f).iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn motion_from_text(text: &str, path: &Path) -> Result<MotionRecording> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim_end() == TEXT_MAGIC => {}
        other => {
            return Err(err(
                1,
                format!("expected {TEXT_MAGIC:?}, found {:?}", other.unwrap_or("")),
            ))
        }
    }
    let header = lines.next().ok_or_else(|| err(2, "missing header line".into()))?;
    let (mut fps, mut joints, mut label, mut subject, mut trial) = (None, None, None, None, None);
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| err(2, format!("header field {field:?} is not key=value")))?;
        let slot = match k {
            "fps" => &mut fps,
            "joints" => &mut joints,
            "label" => &mut label,
            "subject" => &mut subject,
            "trial" => &mut trial,
            _ => return Err(err(2, format!("unknown header key {k:?}"))),
        };
        if slot.replace(v.to_string()).is_some() {
            return Err(err(2, format!("duplicate header key {k:?}")));
        }
    }
    let need = |v: Option<String>, k: &str| v.ok_or_else(|| err(2, format!("header is missing {k}=")));
    let fps_s = need(fps, "fps")?;
    let fps: u32 = fps_s
        .parse()
        .map_err(|_| err(2, format!("fps must be a positive integer, got {fps_s:?}")))?;
    let names: Vec<String> = need(joints, "joints")?.split(',').map(str::to_string).collect();
    let schema = SkeletonSchema::from_names(names).map_err(|e| err(2, e.to_string()))?;
    let label = need(label, "label")?;
    let label = (label != "-").then_some(label);
    let (subject, trial) = (need(subject, "subject")?, need(trial, "trial")?);

    let width = 3 * schema.num_joints();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        if line.trim().is_empty() {
            return Err(err(lineno, "empty frame row".into()));
        }
        let before = data.len();
        for cell in line.split_whitespace() {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != width {
            return Err(err(lineno, format!("expected {width} values, found {got}")));
        }
    }
    let t = data.len() / width;
    if t == 0 {
        return Err(err(3, "recording has no frames".into()));
    }
    let frames = Tensor::new(&[t, 3, schema.num_joints()], data)?;
    MotionRecording::new(schema, fps, frames, label, subject, trial).map_err(|e| err(2, e.to_string()))
}

pub fn motion_to_bytes(rec: &MotionRecording) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&rec.header()).map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok(container::encode(
        MOTION_MAGIC,
        MOTION_VERSION,
        &header,
        rec.frames.data(),
    ))
}

pub fn motion_from_bytes(bytes: &[u8]) -> Result<MotionRecording> {
    let (header, payload) = container::decode(bytes, MOTION_MAGIC, MOTION_VERSION)?;
    let h: RecordingHeader = serde_json::from_slice(header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let j = h.schema.num_joints();
    if payload.len() != h.num_frames * 3 * j || h.num_frames == 0 {
        return Err(CheckpointError::Payload(format!(
            "{} values for {} frames of {j} joints",
            payload.len(),
            h.num_frames
        ))
        .into());
    }
    let frames = Tensor::new(&[h.num_frames, 3, j], payload)?;
    MotionRecording::new(h.schema, h.fps, frames, h.label, h.subject, h.trial)
}

/// Reads a text or binary motion file; the format is detected from content.
pub fn load_motion_file(path: impl AsRef<Path>) -> Result<MotionRecording> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&MOTION_MAGIC) {
        return motion_from_bytes(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("not UTF-8 text: {e}"),
    })?;
    motion_from_text(&text, path)
}

/// Writes binary when the extension is `mrec`, text otherwise.
pub fn save_motion_file(rec: &MotionRecording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    rec.validate()?;
    let bytes = if path.extension().is_some_and(|e| e == "mrec") {
        motion_to_bytes(rec)?
    } else {
        motion_to_text(rec).into_bytes()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Motion files directly inside `dir` (`.mrec`, `.motion`, `.txt`), sorted by
/// path.
pub fn list_motion_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file()
            && p.extension()
                .is_some_and(|e| e == "mrec" || e == "motion" || e == "txt")
        {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
