//! Evaluation: horizon errors against ground truth, limb-masked inputs,
//! whole-sequence classification, spike-triggered averages and latent
//! trajectories.

mod classify;
mod horizon;
mod latent;
mod sta;

pub use classify::{
    aggregate, check_disjoint, class_index, class_names, classify_sequence, evaluate_classification, labeled_features,
    sequence_features, sequence_windows, Aggregation, ClassifyOptions, ConfusionMatrix, SequencePrediction,
};
pub use horizon::{
    evaluate_horizons, evaluate_missing_limb, frame_error, horizon_frame_index, persistence_baseline, EvalOptions,
    Horizon, HorizonReport, PersistenceBaseline, WindowPredictor,
};
pub use latent::{latent_trajectory, pca, LatentTrajectory, Pca};
pub use sta::{spike_triggered_average, spike_triggered_averages, StaResult, DEFAULT_STA_THRESHOLD};

/// Prediction horizons in milliseconds reported by default.
pub const DEFAULT_HORIZONS_MS: [f64; 6] = [80.0, 160.0, 320.0, 560.0, 1000.0, 1600.0];
