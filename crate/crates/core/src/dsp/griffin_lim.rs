//! Griffin-Lim phase reconstruction.
//!
//! Iterations alternate between the least-squares inverse of the centered,
//! reflect-padded STFT (the same analysis used for features) and re-imposing
//! the target magnitude on the re-analyzed spectrum. With that operator pair
//! the magnitude error is non-increasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use super::audio::AudioClip;
use super::stft::{Magnitude, PadMode, Spectrum, StftConfig, StftPlan};
use crate::error::{shape_err, Error, Result};

pub const DEFAULT_ITERS: usize = 60;
pub const DEFAULT_SEED: u64 = 0x6c_696d;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GriffinLimConfig {
    pub iters: usize,
    pub seed: u64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            seed: DEFAULT_SEED,
        }
    }
}

/// Reconstruction plus the spectral-convergence error after each iteration.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub clip: AudioClip,
    pub convergence: Vec<f64>,
}

/// Output length for `frames` STFT frames.
pub fn output_len(frames: usize, hop: usize) -> usize {
    frames.saturating_sub(1) * hop
}

/// Full-spectrum Frobenius norm: interior bins stand for a conjugate pair
/// and count twice.
fn spectrum_sq_norm(bins: usize, frames: usize, f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for t in 0..frames {
        for k in 0..bins {
            let w = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
            total += w * f(t, k);
        }
    }
    total
}

/// `|| |STFT(x)| - mag || / || mag ||`, with norms taken over the full
/// two-sided spectrum.
pub fn spectral_convergence(mag: &Magnitude, clip: &AudioClip, plan: &StftPlan) -> f64 {
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let est = plan.analyze(&x, PadMode::Reflect).magnitude();
    convergence_between(mag, &est)
}

fn convergence_between(target: &Magnitude, est: &Magnitude) -> f64 {
    let frames = target.frames.min(est.frames);
    let num = spectrum_sq_norm(target.bins, frames, |t, k| {
        let d = est.frame(t)[k] - target.frame(t)[k];
        d * d
    });
    let den = spectrum_sq_norm(target.bins, target.frames, |t, k| target.frame(t)[k].powi(2));
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

pub fn griffin_lim(mag: &Magnitude, iters: usize) -> Result<AudioClip> {
    let cfg = GriffinLimConfig {
        iters,
        ..Default::default()
    };
    Ok(griffin_lim_with(mag, cfg, &StftPlan::new(StftConfig::default())?)?.clip)
}

pub fn griffin_lim_with(mag: &Magnitude, cfg: GriffinLimConfig, plan: &StftPlan) -> Result<Reconstruction> {
    if mag.bins != plan.config.n_bins() {
        return Err(shape_err!(
            "magnitude has {} bins, STFT expects {}",
            mag.bins,
            plan.config.n_bins()
        ));
    }
    if let Some(v) = mag.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Input(format!(
            "magnitudes must be finite and nonnegative, found {v}"
        )));
    }
    let len = output_len(mag.frames, plan.config.hop_length);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut spec = Spectrum {
        frames: mag.frames,
        bins: mag.bins,
        data: mag
            .data
            .iter()
            .map(|&m| Complex::from_polar(m, rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect(),
    };

    let mut convergence = Vec::with_capacity(cfg.iters);
    let mut x = plan.synthesize(&spec, len, PadMode::Reflect);
    for _ in 0..cfg.iters {
        let est = plan.analyze(&x, PadMode::Reflect);
        convergence.push(convergence_between(mag, &est.magnitude()));
        for ((s, e), &m) in spec.data.iter_mut().zip(&est.data).zip(&mag.data) {
            let n = e.norm();
            *s = if n > 0.0 {
                e * (m / n)
            } else {
                Complex::new(m, 0.0)
            };
        }
        x = plan.synthesize(&spec, len, PadMode::Reflect);
    }

    let clip = AudioClip {
        samples: x.into_iter().map(|v| v as f32).collect(),
        sample_rate: plan.config.sample_rate,
    };
    Ok(Reconstruction { clip, convergence })
}
