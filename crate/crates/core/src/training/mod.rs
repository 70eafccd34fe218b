//! Losses, the training loop, duration evaluation and inference.

pub mod checkpoint;
pub mod eval;
pub mod infer;
pub mod loss;
pub mod stats;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use eval::{duration_errors, eval_duration, eval_duration_with, DurationErrorReport, WordDurations};
pub use infer::{infer_edit, resynth_all, EditRequest, EditResult, ResynthResult, Vocoder, WordProvenance};
pub use loss::{compute_loss, LossReport, LossVars, DURATION_LOSS_WEIGHT};
pub use stats::MelStats;
pub use trainer::{example_graph, loss_csv, train, validation_loss, TrainConfig, TrainOutcome};
