//! Skeleton schema, recordings and their file formats, normalisation,
//! window pairs, limb masking and a procedural motion generator.

mod io;
mod recording;
mod schema;
mod synth;
mod window;

pub use io::{
    list_motion_files, load_motion_file, motion_from_bytes, motion_from_text, motion_to_bytes, motion_to_text,
    save_motion_file, MOTION_MAGIC, MOTION_VERSION, TEXT_MAGIC,
};
pub use recording::{downsample, normalize_recording, MotionRecording};
pub use schema::{SkeletonSchema, SMPL_JOINTS};
pub use synth::{joint_variance, synth_dataset, synth_generate, SynthAction, SYNTH_JITTER};
pub use window::{
    extract_window, make_window_pairs, mask_limb, pair_count, shuffle_dataset, window_frames, PairSet, WindowIndex,
    WindowPair,
};
pub(crate) use window::{fill_window, zero_joints};
