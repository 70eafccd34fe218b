//! Waveform and spectrogram conversions.

pub mod audio;
pub mod griffin_lim;
pub mod mel;
pub mod stft;

pub use audio::{read_wav, write_wav, AudioClip, SAMPLE_RATE};
pub use griffin_lim::{griffin_lim, griffin_lim_with, spectral_convergence, GriffinLimConfig};
pub use mel::{mel_to_linear, wav_to_mel, MelFilterbank, MelSpectrogram, N_MELS};
pub use stft::{stft, Magnitude, PadMode, Spectrum, StftConfig, StftPlan};
