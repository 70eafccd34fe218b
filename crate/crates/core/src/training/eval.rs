use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_training_example, TrainingExample, Utterance};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationErrorReport {
    /// Mean absolute frame error over masked phonemes.
    pub phoneme_level_error: f64,
    /// Mean absolute error of the summed word duration, in frames.
    pub word_level_error: f64,
    pub n_words: usize,
    pub n_phonemes: usize,
}

/// Predicted and true frame counts for the phonemes of one masked word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDurations {
    pub utterance: String,
    pub word: String,
    pub predicted: Vec<u32>,
    pub truth: Vec<u32>,
}

pub fn duration_errors(words: &[WordDurations]) -> DurationErrorReport {
    let mut phone_err = 0.0;
    let mut word_err = 0.0;
    let mut n_phonemes = 0;
    for w in words {
        for (&p, &t) in w.predicted.iter().zip(&w.truth) {
            phone_err += (p as f64 - t as f64).abs();
            n_phonemes += 1;
        }
        let ps: f64 = w.predicted.iter().map(|&d| d as f64).sum();
        let ts: f64 = w.truth.iter().map(|&d| d as f64).sum();
        word_err += (ps - ts).abs();
    }
    DurationErrorReport {
        phoneme_level_error: if n_phonemes == 0 { 0.0 } else { phone_err / n_phonemes as f64 },
        word_level_error: if words.is_empty() { 0.0 } else { word_err / words.len() as f64 },
        n_words: words.len(),
        n_phonemes,
    }
}

/// Masks one word per utterance (chosen with a generator seeded by `seed`)
/// and compares `predict`'s frame counts on it to the reference.
pub fn eval_duration_with(
    utts: &[Utterance],
    seed: u64,
    mut predict: impl FnMut(&TrainingExample) -> Result<Vec<u32>>,
) -> Result<(DurationErrorReport, Vec<WordDurations>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vec::new();
    for u in utts {
        let ex = match make_training_example(u, &mut rng) {
            Ok(ex) => ex,
            Err(Error::SkipUtterance(msg)) => {
                log::warn!("{msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let span = ex.script.phoneme_span.clone();
        let predicted = predict(&ex)?;
        words.push(WordDurations {
            utterance: u.id.clone(),
            word: ex.script.word_text.clone(),
            predicted: predicted[span.clone()].to_vec(),
            truth: ex.reference.frames[span].to_vec(),
        });
    }
    Ok((duration_errors(&words), words))
}

/// Duration error of the model's finalized (rounded) predictions.
pub fn eval_duration(model: &Model<f32>, utts: &[Utterance], seed: u64) -> Result<(DurationErrorReport, Vec<WordDurations>)> {
    eval_duration_with(utts, seed, |ex| Ok(model.predict_durations(&ex.phonemes, &ex.masked)?.1.frames))
}
