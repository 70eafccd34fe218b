use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{shape_err, Error, Result};

/// Analysis parameters: 50 ms Hann window, 12.5 ms hop, at 24 kHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            n_fft: 2048,
            win_length: 1200,
            hop_length: 300,
        }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }

    pub fn win_seconds(&self) -> f64 {
        self.win_length as f64 / self.sample_rate as f64
    }

    /// Frames produced for a clip of `len` samples (centered framing).
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop_length + 1
    }

    /// Periodic Hann window of `win_length`, zero-padded to `n_fft` and centered.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let off = (self.n_fft - self.win_length) / 2;
        for i in 0..self.win_length {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / self.win_length as f64;
            w[off + i] = 0.5 - 0.5 * phase.cos();
        }
        w
    }

    fn validate(&self) -> Result<()> {
        if self.hop_length == 0 || self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Parameter(format!("invalid STFT configuration {self:?}")));
        }
        Ok(())
    }
}

/// How the signal is extended by `n_fft / 2` on both sides before framing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Reflect,
    Zero,
}

/// One-sided complex spectrogram, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn magnitude(&self) -> Magnitude {
        Magnitude {
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|c| c.norm()).collect(),
        }
    }

    pub fn frame(&self, t: usize) -> &[Complex<f64>] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Nonnegative linear-frequency magnitudes, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitude {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl Magnitude {
    pub fn new(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if frames * bins != data.len() {
            return Err(shape_err!(
                "magnitude of {frames}x{bins} needs {} values, got {}",
                frames * bins,
                data.len()
            ));
        }
        Ok(Self { frames, bins, data })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Reusable FFT plans for one configuration.
pub struct StftPlan {
    pub config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window(),
            forward: planner.plan_fft_forward(config.n_fft),
            inverse: planner.plan_fft_inverse(config.n_fft),
            config,
        })
    }

    /// Centered STFT; frame `t` is centered on sample `t * hop`.
    pub fn analyze(&self, samples: &[f64], pad: PadMode) -> Spectrum {
        let cfg = &self.config;
        let n_fft = cfg.n_fft;
        let half = (n_fft / 2) as isize;
        let frames = cfg.frame_count(samples.len());
        let bins = cfg.n_bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let n = samples.len() as isize;
        for t in 0..frames {
            let start = (t * cfg.hop_length) as isize - half;
            for (j, slot) in buf.iter_mut().enumerate() {
                let w = self.window[j];
                let i = start + j as isize;
                let s = if w == 0.0 {
                    0.0
                } else if (0..n).contains(&i) {
                    samples[i as usize]
                } else {
                    match pad {
                        PadMode::Zero => 0.0,
                        PadMode::Reflect if n > 0 => samples[reflect_index(i, n as usize)],
                        PadMode::Reflect => 0.0,
                    }
                };
                *slot = Complex::new(s * w, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        Spectrum { frames, bins, data }
    }

    /// Least-squares inverse of the centered STFT with padding `pad`,
    /// returning `len` samples.
    ///
    /// Every frame slot reads exactly one sample (a mirrored one inside the
    /// reflect padding), so the normal equations stay diagonal: each sample
    /// is the window-weighted average of every slot that read it.
    pub fn synthesize(&self, spec: &Spectrum, len: usize, pad: PadMode) -> Vec<f64> {
        let cfg = &self.config;
        let n_fft = cfg.n_fft;
        let half = (n_fft / 2) as isize;
        let mut acc = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n_fft as f64;
        for t in 0..spec.frames {
            let row = spec.frame(t);
            buf[..spec.bins].copy_from_slice(row);
            for k in spec.bins..n_fft {
                buf[k] = row[n_fft - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = (t * cfg.hop_length) as isize - half;
            for (j, c) in buf.iter().enumerate() {
                let w = self.window[j];
                if w == 0.0 {
                    continue;
                }
                let i = start + j as isize;
                let src = if (0..len as isize).contains(&i) {
                    i as usize
                } else {
                    match pad {
                        PadMode::Reflect if len > 0 => reflect_index(i, len),
                        _ => continue,
                    }
                };
                acc[src] += w * c.re * scale;
                norm[src] += w * w;
            }
        }
        for (a, n) in acc.iter_mut().zip(&norm) {
            if *n > 1e-12 {
                *a /= n;
            }
        }
        acc
    }
}

/// Centered, reflect-padded STFT of a clip with the default configuration.
pub fn stft(clip: &AudioClip) -> Result<Spectrum> {
    stft_with(clip, &StftPlan::new(StftConfig::default())?)
}

pub fn stft_with(clip: &AudioClip, plan: &StftPlan) -> Result<Spectrum> {
    if clip.is_empty() {
        return Err(Error::Input("cannot analyze an empty clip".into()));
    }
    let samples: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    Ok(plan.analyze(&samples, PadMode::Reflect))
}
