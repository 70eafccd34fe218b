use nalgebra::DMatrix;

use super::audio::AudioClip;
use super::stft::{stft_with, Magnitude, StftConfig, StftPlan};
use crate::error::{shape_err, Error, Result};

pub const N_MELS: usize = 80;
/// Energies below this are clamped before the log.
pub const LOG_FLOOR: f64 = 1e-5;

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular mel filters with Slaney area normalization, plus the
/// Moore-Penrose pseudo-inverse used to map mel energies back to bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// `n_mels x n_bins`, row-major.
    pub weights: Vec<f64>,
    /// `n_bins x n_mels`, row-major.
    pinv: Vec<f64>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_fft: usize, sample_rate: u32, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(Error::Parameter(format!(
                "mel band [{fmin}, {fmax}] Hz invalid for sample rate {sample_rate}"
            )));
        }
        if n_mels == 0 || n_fft < 2 {
            return Err(Error::Parameter(format!("n_mels={n_mels}, n_fft={n_fft}")));
        }
        let n_bins = n_fft / 2 + 1;
        let fft_freqs: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
            .collect();
        let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (hi - lo);
            for (k, &f) in fft_freqs.iter().enumerate() {
                let lower = (f - lo) / (mid - lo);
                let upper = (hi - f) / (hi - mid);
                weights[m * n_bins + k] = lower.min(upper).max(0.0) * enorm;
            }
        }
        for m in 0..n_mels {
            if weights[m * n_bins..(m + 1) * n_bins].iter().all(|&w| w == 0.0) {
                return Err(Error::Parameter(format!(
                    "mel filter {m} covers no FFT bin; use fewer mels or a larger n_fft"
                )));
            }
        }

        let fb = DMatrix::from_row_slice(n_mels, n_bins, &weights);
        let pinv_m = fb
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Parameter(format!("filterbank pseudo-inverse failed: {e}")))?;
        let mut pinv = vec![0.0; n_bins * n_mels];
        for b in 0..n_bins {
            for m in 0..n_mels {
                pinv[b * n_mels + m] = pinv_m[(b, m)];
            }
        }

        Ok(Self {
            n_mels,
            n_bins,
            fmin,
            fmax,
            weights,
            pinv,
            centers: edges[1..=n_mels].to_vec(),
        })
    }

    /// Filterbank for the default STFT: 80 mels over `[0, sr/2]`.
    pub fn standard() -> Result<Self> {
        let cfg = StftConfig::default();
        Self::new(cfg.n_fft, cfg.sample_rate, N_MELS, 0.0, cfg.sample_rate as f64 / 2.0)
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers
    }

    /// `weights . spectrum` for one frame.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(spectrum).map(|(w, s)| w * s).sum())
            .collect()
    }

    /// `pinv(weights) . energies` for one frame.
    pub fn apply_pinv(&self, energies: &[f64]) -> Vec<f64> {
        self.pinv
            .chunks(self.n_mels)
            .map(|row| row.iter().zip(energies).map(|(p, e)| p * e).sum())
            .collect()
    }
}

/// Log-mel spectrogram, `frames x n_mels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: usize,
    pub n_mels: usize,
    pub hop_seconds: f64,
    pub win_seconds: f64,
    pub data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(frames: usize, n_mels: usize, data: Vec<f32>) -> Result<Self> {
        if frames * n_mels != data.len() {
            return Err(shape_err!(
                "mel of {frames}x{n_mels} needs {} values, got {}",
                frames * n_mels,
                data.len()
            ));
        }
        let cfg = StftConfig::default();
        Ok(Self {
            frames,
            n_mels,
            hop_seconds: cfg.hop_seconds(),
            win_seconds: cfg.win_seconds(),
            data,
        })
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frames `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.frames {
            return Err(shape_err!("frame range {start}..{end} outside {} frames", self.frames));
        }
        Self::new(
            end - start,
            self.n_mels,
            self.data[start * self.n_mels..end * self.n_mels].to_vec(),
        )
    }

    /// Trims or pads (repeating the last frame) to exactly `frames` rows.
    pub fn fit_frames(&self, frames: usize) -> Result<Self> {
        if self.frames == 0 {
            return Err(shape_err!("cannot resize an empty spectrogram"));
        }
        let mut data = self.data[..self.n_mels * frames.min(self.frames)].to_vec();
        let last = self.frame(self.frames - 1).to_vec();
        while data.len() < frames * self.n_mels {
            data.extend_from_slice(&last);
        }
        Self::new(frames, self.n_mels, data)
    }

    pub fn concat(parts: &[MelSpectrogram]) -> Result<Self> {
        let n_mels = parts.first().map_or(N_MELS, |p| p.n_mels);
        let mut data = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.n_mels != n_mels {
                return Err(shape_err!("cannot concatenate {} and {} mel bands", n_mels, p.n_mels));
            }
            data.extend_from_slice(&p.data);
            frames += p.frames;
        }
        Self::new(frames, n_mels, data)
    }
}

/// Frame-wise `log(max(fb . |STFT|, 1e-5))`.
pub fn wav_to_mel(clip: &AudioClip, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    wav_to_mel_with(clip, fb, &StftPlan::new(StftConfig::default())?)
}

pub fn wav_to_mel_with(clip: &AudioClip, fb: &MelFilterbank, plan: &StftPlan) -> Result<MelSpectrogram> {
    if plan.config.n_bins() != fb.n_bins {
        return Err(shape_err!(
            "filterbank has {} bins, STFT produces {}",
            fb.n_bins,
            plan.config.n_bins()
        ));
    }
    let mag = stft_with(clip, plan)?.magnitude();
    let mut data = Vec::with_capacity(mag.frames * fb.n_mels);
    for t in 0..mag.frames {
        for e in fb.apply(mag.frame(t)) {
            data.push(e.max(LOG_FLOOR).ln() as f32);
        }
    }
    let mut mel = MelSpectrogram::new(mag.frames, fb.n_mels, data)?;
    mel.hop_seconds = plan.config.hop_seconds();
    mel.win_seconds = plan.config.win_seconds();
    Ok(mel)
}

/// Linear magnitudes `max(pinv(fb) . exp(mel), 0)`.
pub fn mel_to_linear(mel: &MelSpectrogram, fb: &MelFilterbank) -> Result<Magnitude> {
    if mel.n_mels != fb.n_mels {
        return Err(shape_err!(
            "spectrogram has {} mel bands, filterbank {}",
            mel.n_mels,
            fb.n_mels
        ));
    }
    if !mel.all_finite() {
        return Err(Error::Input("mel spectrogram contains non-finite values".into()));
    }
    let mut data = Vec::with_capacity(mel.frames * fb.n_bins);
    for t in 0..mel.frames {
        let energies: Vec<f64> = mel.frame(t).iter().map(|&v| (v as f64).exp()).collect();
        data.extend(fb.apply_pinv(&energies).into_iter().map(|v| v.max(0.0)));
    }
    Magnitude::new(mel.frames, fb.n_bins, data)
}
