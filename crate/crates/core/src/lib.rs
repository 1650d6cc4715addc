//! Feedforward temporal encoders for skeletal motion.
//!
//! A temporal encoder maps the last `Δt` frames of a skeleton recording through
//! a narrow bottleneck to a prediction of the next `Δt` frames. Three encoder
//! structures are provided: a symmetric fully-connected stack, a bank of
//! convolutions along time, and a body-hierarchy encoder whose connectivity is
//! restricted joint → limb → limb group → body.
//!
//! - [`tensor`]: dense arrays and seeded randomness
//! - [`nn`]: layers with hand-written backward passes
//! - [`model`]: architecture builders, feature taps, checkpoints
//! - [`data`]: skeleton schema, recording I/O, normalisation, windowing, synthesis
//! - [`train`]: SGD with momentum, dropout schedule, training loops
//! - [`eval`]: horizon errors, classification, spike-triggered averages

mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{CheckpointError, Error, Result};
pub use tensor::{sample_sparse_gaussian, SeededRng, Tensor};
