//! Alignment ingestion, frame durations, masked-word examples and output
//! splicing.

pub mod alignment;
pub mod dataset;
pub mod example;
pub mod inventory;
pub mod sequence;
pub mod splice;
pub mod synthetic;

pub use alignment::{seconds_to_frames, AlignmentRecord, PhoneInterval, WordInterval, HOP_SECONDS};
pub use dataset::{load_dataset, read_manifest, ManifestEntry};
pub use example::{example_for_word, make_training_example, TrainingExample, Utterance};
pub use inventory::Inventory;
pub use sequence::{DurationKind, DurationTrack, EditScript, PhonemeSequence};
pub use splice::{splice_output, CROSSFADE_SAMPLES};
pub use synthetic::{synthetic_utterances, SyntheticConfig};
