use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{contract_err, Error, Result};

const MIN_STD: f64 = 1e-3;

/// Per-band mean and standard deviation of log-mel values over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl MelStats {
    pub fn fit<'a>(mels: impl IntoIterator<Item = &'a MelSpectrogram>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for mel in mels {
            if sum.is_empty() {
                sum = vec![0.0; mel.n_mels];
                sq = vec![0.0; mel.n_mels];
            } else if mel.n_mels != sum.len() {
                return Err(contract_err!("mixed mel sizes {} and {}", sum.len(), mel.n_mels));
            }
            for row in mel.data.chunks(mel.n_mels) {
                for (j, &v) in row.iter().enumerate() {
                    sum[j] += v as f64;
                    sq[j] += (v as f64).powi(2);
                }
            }
            count += mel.frames;
        }
        if count == 0 {
            return Err(Error::Config("cannot fit mel statistics on no frames".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / n - m * m).max(0.0).sqrt().max(MIN_STD)) as f32)
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    pub fn identity(n_mels: usize) -> Self {
        Self {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        }
    }

    fn check(&self, mel: &MelSpectrogram) -> Result<()> {
        if mel.n_mels != self.mean.len() {
            return Err(contract_err!(
                "statistics cover {} bands, mel has {}",
                self.mean.len(),
                mel.n_mels
            ));
        }
        Ok(())
    }

    pub fn normalize(&self, mel: &MelSpectrogram) -> Result<MelSpectrogram> {
        self.check(mel)?;
        let mut out = mel.clone();
        let m = mel.n_mels;
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = (*v - self.mean[i % m]) / self.std[i % m];
        }
        Ok(out)
    }

    pub fn denormalize(&self, mel: &MelSpectrogram) -> Result<MelSpectrogram> {
        self.check(mel)?;
        let mut out = mel.clone();
        let m = mel.n_mels;
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = *v * self.std[i % m] + self.mean[i % m];
        }
        Ok(out)
    }
}
