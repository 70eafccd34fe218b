//! One-stage, context-aware speech insertion.
//!
//! Given a recording, its phone-level forced alignment and an edited
//! transcript, the engine predicts durations for the inserted phonemes,
//! aligns phoneme and spectrogram streams with a length regulator, decodes
//! the whole sentence's mel-spectrogram non-autoregressively and vocodes it
//! with Griffin-Lim.
//!
//! * [`tensor`]: tensors, autodiff tape, Adam, checkpoint archives
//! * [`dsp`]: STFT, mel features, pseudo-inverse recovery, Griffin-Lim
//! * [`corpus`]: alignment ingestion, frame durations, masked examples, splicing
//! * [`model`]: the network
//! * [`training`]: losses, training loop, duration metrics, inference

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
