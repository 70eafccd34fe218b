use std::path::Path;

use log::warn;
use rand::Rng;

use super::alignment::{AlignmentRecord, HOP_SECONDS};
use super::inventory::Inventory;
use super::sequence::{DurationTrack, EditScript, PhonemeSequence};
use crate::dsp::{read_wav, wav_to_mel, AudioClip, MelFilterbank, MelSpectrogram, SAMPLE_RATE};
use crate::error::{contract_err, Error, Result};

/// One aligned corpus item: phonemes, reference durations and a mel whose
/// frame count equals the duration sum.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub record: AlignmentRecord,
    pub phonemes: PhonemeSequence,
    pub durations: DurationTrack,
    pub mel: MelSpectrogram,
}

impl Utterance {
    pub fn new(
        id: String,
        record: AlignmentRecord,
        phonemes: PhonemeSequence,
        durations: DurationTrack,
        mel: MelSpectrogram,
    ) -> Result<Self> {
        if durations.frames.len() != phonemes.len() {
            return Err(contract_err!(
                "{id}: {} durations for {} phonemes",
                durations.frames.len(),
                phonemes.len()
            ));
        }
        if durations.total() != mel.frames {
            return Err(contract_err!(
                "{id}: durations sum to {} but mel has {} frames",
                durations.total(),
                mel.frames
            ));
        }
        Ok(Self {
            id,
            record,
            phonemes,
            durations,
            mel,
        })
    }

    /// Builds an utterance from a record and its audio. A mel that is one
    /// frame off the duration sum (the centered-frame convention) is trimmed
    /// or padded at the tail; unaligned trailing audio becomes silence.
    pub fn from_audio(
        id: String,
        record: AlignmentRecord,
        clip: &AudioClip,
        inv: &Inventory,
        fb: &MelFilterbank,
    ) -> Result<Self> {
        let (mut phonemes, mut durations) = record.to_frames(inv, HOP_SECONDS)?;
        let mel = wav_to_mel(clip, fb)?;
        let sum = durations.total();
        if mel.frames > sum + 1 {
            let extra = (mel.frames - 1 - sum) as u32;
            warn!("{id}: {extra} trailing frames are unaligned; labeling them silence");
            let mut ids = phonemes.ids().to_vec();
            let mut words = phonemes.word_index().to_vec();
            if inv.is_silence(*ids.last().unwrap()) {
                *durations.frames.last_mut().unwrap() += extra;
            } else {
                ids.push(inv.sil());
                words.push(None);
                durations.frames.push(extra);
            }
            let n = ids.len();
            phonemes = PhonemeSequence::new(ids, words, vec![false; n], inv.len())?;
        } else if sum > mel.frames + 1 {
            return Err(Error::Input(format!(
                "{id}: alignment covers {sum} frames but audio has only {}",
                mel.frames
            )));
        }
        let mel = mel.fit_frames(durations.total())?;
        Self::new(id, record, phonemes, durations, mel)
    }

    /// Loads the record's audio, resolving a relative path against `base`.
    pub fn load(id: String, record: AlignmentRecord, base: &Path, inv: &Inventory, fb: &MelFilterbank) -> Result<Self> {
        let path = if record.audio.is_absolute() {
            record.audio.clone()
        } else {
            base.join(&record.audio)
        };
        let clip = read_wav(&path)?;
        let clip = if clip.sample_rate == SAMPLE_RATE {
            clip
        } else {
            clip.resample(SAMPLE_RATE)
        };
        Self::from_audio(id, record, &clip, inv, fb)
    }

    /// Words that may be masked for training: more than one phoneme.
    pub fn maskable_words(&self) -> Vec<usize> {
        self.phonemes
            .words()
            .into_iter()
            .filter(|&w| self.phonemes.word_span(w).len() > 1)
            .collect()
    }

    pub fn word_text(&self, w: usize) -> String {
        self.record.words.get(w).map(|x| x.word.clone()).unwrap_or_default()
    }
}

/// A masked-word sample: the model sees `masked` durations and must
/// reproduce the full `target` mel.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub phonemes: PhonemeSequence,
    pub reference: DurationTrack,
    pub masked: DurationTrack,
    pub script: EditScript,
    pub target: MelSpectrogram,
}

/// Example with word `w` treated as the inserted word.
pub fn example_for_word(utt: &Utterance, w: usize) -> Result<TrainingExample> {
    let span = utt.phonemes.word_span(w);
    if span.is_empty() {
        return Err(contract_err!("{}: no word {w}", utt.id));
    }
    let frames = utt.durations.frames[span.clone()].iter().map(|&d| d as usize).sum();
    let script = EditScript {
        phoneme_span: span.clone(),
        frame_offset: utt.durations.offset_of(span.start),
        original_frames: frames,
        edited_frames: frames,
        word_text: utt.word_text(w),
    };
    Ok(TrainingExample {
        phonemes: utt.phonemes.with_inserted(span.clone())?,
        reference: utt.durations.clone(),
        masked: utt.durations.masked(span),
        script,
        target: utt.mel.clone(),
    })
}

/// Masks one word chosen uniformly among those with more than one phoneme.
pub fn make_training_example<R: Rng + ?Sized>(utt: &Utterance, rng: &mut R) -> Result<TrainingExample> {
    let words = utt.maskable_words();
    if words.is_empty() {
        return Err(Error::SkipUtterance(format!(
            "{}: no word with more than one phoneme",
            utt.id
        )));
    }
    example_for_word(utt, words[rng.gen_range(0..words.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::alignment::{PhoneInterval, WordInterval};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn utterance(word_sizes: &[usize]) -> Utterance {
        let inv = Inventory::arpabet();
        let mut phones = Vec::new();
        let mut words = Vec::new();
        let mut t = 0.0;
        for (w, &n) in word_sizes.iter().enumerate() {
            let start = t;
            for _ in 0..n {
                phones.push(PhoneInterval {
                    phone: "T".into(),
                    start: t,
                    end: t + 0.05,
                    word: Some(w),
                });
                t += 0.05;
            }
            words.push(WordInterval {
                word: format!("w{w}"),
                start,
                end: t,
            });
        }
        let record = AlignmentRecord {
            audio: "x.wav".into(),
            sample_rate: SAMPLE_RATE,
            transcript: String::new(),
            phones,
            words,
        };
        let (phonemes, durations) = record.to_frames(&inv, HOP_SECONDS).unwrap();
        let mel = MelSpectrogram::new(durations.total(), 80, vec![0.0; durations.total() * 80]).unwrap();
        Utterance::new("u".into(), record, phonemes, durations, mel).unwrap()
    }

    #[test]
    fn only_multi_phone_word_is_chosen() {
        let utt = utterance(&[1, 3, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let ex = make_training_example(&utt, &mut rng).unwrap();
            assert_eq!(ex.script.phoneme_span, 1..4);
            assert_eq!(ex.script.word_text, "w1");
            assert_eq!(ex.script.frame_offset, 4);
        }
    }

    #[test]
    fn masked_track_zeroes_span_only() {
        let utt = utterance(&[2, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let ex = make_training_example(&utt, &mut rng).unwrap();
            for i in 0..ex.reference.frames.len() {
                let expect = if ex.script.phoneme_span.contains(&i) { 0 } else { ex.reference.frames[i] };
                assert_eq!(ex.masked.frames[i], expect);
            }
            assert_eq!(ex.phonemes.inserted_span(), ex.script.phoneme_span);
        }
    }

    #[test]
    fn no_qualifying_word_skips() {
        let utt = utterance(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(make_training_example(&utt, &mut rng), Err(Error::SkipUtterance(_))));
    }

    #[test]
    fn choice_is_uniform() {
        let utt = utterance(&[2, 1, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            let ex = make_training_example(&utt, &mut rng).unwrap();
            counts[utt.phonemes.word_index()[ex.script.phoneme_span.start].unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        for w in [0, 2, 3] {
            let p = counts[w] as f64 / n as f64;
            assert!((p - 1.0 / 3.0).abs() < 0.02, "word {w}: {p}");
        }
    }

    #[test]
    fn tail_frame_is_trimmed() {
        let inv = Inventory::arpabet();
        let fb = MelFilterbank::standard().unwrap();
        let mut utt = utterance(&[2]);
        // 0.1 s of audio: 2400 samples give 9 mel frames against 8 aligned.
        utt.record.phones.last_mut().unwrap().end = 0.1;
        let clip = AudioClip::silence(2400);
        let u = Utterance::from_audio("u".into(), utt.record.clone(), &clip, &inv, &fb).unwrap();
        assert_eq!(u.mel.frames, 8);
        assert_eq!(u.durations.total(), 8);
    }

    #[test]
    fn unaligned_tail_becomes_silence() {
        let inv = Inventory::arpabet();
        let fb = MelFilterbank::standard().unwrap();
        let utt = utterance(&[2]);
        let clip = AudioClip::silence(4800);
        let u = Utterance::from_audio("u".into(), utt.record, &clip, &inv, &fb).unwrap();
        assert_eq!(u.phonemes.len(), 3);
        assert_eq!(u.phonemes.ids()[2], inv.sil());
        assert_eq!(u.durations.total(), 16);
    }
}
