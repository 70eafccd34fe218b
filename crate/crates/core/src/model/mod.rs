//! The context-aware insertion network.

pub mod config;
pub mod layers;
pub mod network;

pub use config::ModelConfig;
pub use layers::{scaled_positional_encoding, sinusoid_table, transformer_encoder, EncoderLayer, Fwd, Linear};
pub use network::{
    extend_mel, finalize_durations, length_regulator, log_durations_to_frames, regulator_index, Model, Synthesis,
    TrainOutput,
};
