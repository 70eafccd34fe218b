//! Word insertion and full-sentence resynthesis with a trained checkpoint.

use serde::Serialize;

use super::checkpoint::Checkpoint;
use crate::corpus::{example_for_word, splice_output, DurationTrack, EditScript, PhonemeSequence, Utterance};
use crate::dsp::{griffin_lim_with, mel_to_linear, AudioClip, GriffinLimConfig, MelFilterbank, MelSpectrogram, StftConfig, StftPlan};
use crate::error::{Error, Result};

/// Pseudo-inverse mel recovery followed by Griffin-Lim.
pub struct Vocoder {
    pub filterbank: MelFilterbank,
    pub plan: StftPlan,
    pub griffin_lim: GriffinLimConfig,
}

impl Vocoder {
    pub fn new(griffin_lim: GriffinLimConfig) -> Result<Self> {
        Ok(Self {
            filterbank: MelFilterbank::standard()?,
            plan: StftPlan::new(StftConfig::default())?,
            griffin_lim,
        })
    }

    pub fn hop(&self) -> usize {
        self.plan.config.hop_length
    }

    /// Waveform for a log-mel spectrogram.
    pub fn vocode(&self, mel: &MelSpectrogram) -> Result<AudioClip> {
        let mag = mel_to_linear(mel, &self.filterbank)?;
        Ok(griffin_lim_with(&mag, self.griffin_lim, &self.plan)?.clip)
    }
}

#[derive(Debug, Clone)]
pub struct EditRequest {
    /// Index of the word the new one follows; -1 inserts before the first word.
    pub insert_after_word: i64,
    pub phonemes: Vec<usize>,
    pub word_text: String,
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub audio: AudioClip,
    /// Synthesized full-sentence log-mel.
    pub mel: MelSpectrogram,
    pub phonemes: PhonemeSequence,
    pub durations: DurationTrack,
    pub raw_durations: Vec<f64>,
    pub script: EditScript,
}

/// Phoneme index at which a word following `after_word` starts.
fn insertion_point(utt: &Utterance, after_word: i64) -> Result<usize> {
    let words = utt.phonemes.words();
    if after_word < -1 || after_word >= words.len() as i64 {
        return Err(Error::Input(format!(
            "cannot insert after word {after_word}: utterance has {} words",
            words.len()
        )));
    }
    Ok(if after_word == -1 {
        words.first().map_or(0, |&w| utt.phonemes.word_span(w).start)
    } else {
        utt.phonemes.word_span(words[after_word as usize]).end
    })
}

/// Inserts a word into a recording. `utt` must be the recording's aligned
/// utterance with its log-mel in natural units.
pub fn infer_edit(ck: &Checkpoint, utt: &Utterance, original: &AudioClip, req: &EditRequest, vocoder: &Vocoder) -> Result<EditResult> {
    let at = insertion_point(utt, req.insert_after_word)?;
    let word = (req.insert_after_word + 1) as usize;
    let vocab = ck.model.config.vocab_size;
    let (phonemes, masked) = if req.phonemes.is_empty() {
        (utt.phonemes.clone(), utt.durations.clone())
    } else {
        let mut frames = utt.durations.frames.clone();
        frames.splice(at..at, std::iter::repeat_n(0, req.phonemes.len()));
        (
            utt.phonemes.splice_in(at, &req.phonemes, word, vocab)?,
            DurationTrack::reference(frames),
        )
    };
    let context = ck.stats.normalize(&utt.mel)?;
    let synth = ck.model.synthesize(&phonemes, &masked, &context, 0)?;
    let mel = ck.stats.denormalize(&synth.mel)?;
    let script = if req.phonemes.is_empty() {
        EditScript::empty()
    } else {
        EditScript {
            phoneme_span: phonemes.inserted_span(),
            frame_offset: synth.frame_offset,
            original_frames: 0,
            edited_frames: synth.inserted_frames,
            word_text: req.word_text.clone(),
        }
    };
    let audio = if script.is_empty() {
        original.clone()
    } else {
        let patched = vocoder.vocode(&mel)?;
        splice_output(original, &patched, &script, vocoder.hop())?
    };
    Ok(EditResult {
        audio,
        mel,
        phonemes,
        durations: synth.durations,
        raw_durations: synth.raw_durations,
        script,
    })
}

/// Which synthesized frames each word contributed, in output order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordProvenance {
    pub word_index: usize,
    pub word: String,
    pub output_start: usize,
    pub frames: usize,
}

#[derive(Debug, Clone)]
pub struct ResynthResult {
    pub audio: AudioClip,
    pub mel: MelSpectrogram,
    pub words: Vec<WordProvenance>,
}

/// Regenerates every word from the rest of the sentence, one masked pass
/// per word, and vocodes the concatenation in transcript order.
pub fn resynth_all(ck: &Checkpoint, utt: &Utterance, vocoder: &Vocoder) -> Result<ResynthResult> {
    let mut norm = utt.clone();
    norm.mel = ck.stats.normalize(&utt.mel)?;
    let mut parts = Vec::new();
    let mut words = Vec::new();
    let mut start = 0;
    for w in utt.phonemes.words() {
        let ex = example_for_word(&norm, w)?;
        let synth = ck
            .model
            .synthesize(&ex.phonemes, &ex.masked, &ex.target, ex.script.original_frames)?;
        parts.push(
            synth
                .mel
                .slice(synth.frame_offset, synth.frame_offset + synth.inserted_frames)?,
        );
        words.push(WordProvenance {
            word_index: w,
            word: ex.script.word_text,
            output_start: start,
            frames: synth.inserted_frames,
        });
        start += synth.inserted_frames;
    }
    if parts.is_empty() {
        return Err(Error::Input(format!("{} has no words to resynthesize", utt.id)));
    }
    let mel = ck.stats.denormalize(&MelSpectrogram::concat(&parts)?)?;
    let audio = vocoder.vocode(&mel)?;
    Ok(ResynthResult { audio, mel, words })
}
