//! Architecture specs, network builders, feature taps and checkpoints.

mod build;
mod checkpoint;
mod network;
mod spec;

pub use build::{build, build_classifier, build_cte, build_hte, build_ste, hierarchy_masks};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use network::{ForwardCache, NetLayer, Network, Tap, Taps};
pub use spec::{
    ArchKind, ArchitectureSpec, ClassifierSpec, ConvBranchSpec, GroupSpec, HierarchySpec, InitSpec, LimbSpec,
};
