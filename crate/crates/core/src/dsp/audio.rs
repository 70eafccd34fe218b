use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// Sample rate every pipeline stage expects.
pub const SAMPLE_RATE: u32 = 24_000;

/// Mono waveform with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resampling.
    pub fn resample(&self, target_rate: u32) -> AudioClip {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return AudioClip {
                samples: self.samples.clone(),
                sample_rate: target_rate,
            };
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let out_len =
            ((self.samples.len() as f64) * target_rate as f64 / self.sample_rate as f64).round() as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(last);
                let i1 = (i0 + 1).min(last);
                let frac = (pos - i0 as f64) as f32;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            })
            .collect();
        AudioClip {
            samples,
            sample_rate: target_rate,
        }
    }
}

/// Reads a WAV file, downmixing to mono and resampling to 24 kHz when needed.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        warn!("{}: downmixing {channels} channels to mono", path.display());
        interleaved
            .chunks(channels)
            .map(|c| c.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    let clip = AudioClip::new(samples, spec.sample_rate)?;
    if clip.sample_rate != SAMPLE_RATE {
        warn!(
            "{}: resampling {} Hz to {} Hz",
            path.display(),
            clip.sample_rate,
            SAMPLE_RATE
        );
        return Ok(clip.resample(SAMPLE_RATE));
    }
    Ok(clip)
}

/// Encodes a clip as 16-bit PCM mono WAV bytes.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec)?;
        for &s in &clip.samples {
            w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)?;
        }
        w.finalize()?;
    }
    Ok(cursor.into_inner())
}

/// Writes a clip as 16-bit PCM mono WAV, atomically.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    crate::tensor::checkpoint::write_atomic(path, &encode_wav(clip)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_halves_length() {
        let clip = AudioClip::new((0..480).map(|i| i as f32 / 480.0).collect(), 48_000).unwrap();
        let r = clip.resample(24_000);
        assert_eq!(r.len(), 240);
        assert_eq!(r.sample_rate, 24_000);
        // Linear ramp stays a linear ramp.
        assert!((r.samples[10] - clip.samples[20]).abs() < 1e-6);
    }

    #[test]
    fn wav_round_trip_quantizes_to_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 1.0, -1.0], SAMPLE_RATE).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in back.samples.iter().zip(&clip.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn foreign_rate_is_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let clip = AudioClip::new(vec![0.1; 16_000], 16_000).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, SAMPLE_RATE);
        assert_eq!(back.len(), 24_000);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_wav(Path::new("/nonexistent/x.wav")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(AudioClip::new(vec![f32::NAN], SAMPLE_RATE).is_err());
    }
}
