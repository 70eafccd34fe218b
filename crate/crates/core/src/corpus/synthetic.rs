//! Procedurally generated "speech": each phoneme is a harmonic tone with a
//! phoneme-specific pitch and a phoneme-specific duration.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alignment::{AlignmentRecord, PhoneInterval, WordInterval, HOP_SECONDS};
use super::dataset::{manifest_text, ManifestEntry};
use super::example::Utterance;
use super::inventory::{Inventory, SIL};
use crate::dsp::{write_wav, AudioClip, MelFilterbank, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::checkpoint::write_atomic;

const HOP: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_phones_per_word: usize,
    pub max_phones_per_word: usize,
    /// Phonemes are drawn from the first `phoneme_pool` non-special symbols.
    pub phoneme_pool: usize,
    /// Probability of each of the -1 and +1 frame perturbations.
    pub duration_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            utterances: 8,
            min_words: 2,
            max_words: 3,
            min_phones_per_word: 2,
            max_phones_per_word: 3,
            phoneme_pool: 8,
            duration_noise: 0.0,
            seed: 0,
        }
    }
}

/// Noise-free duration in frames for phoneme `id`.
pub fn base_duration(id: usize) -> u32 {
    2 + (id * 5 % 7) as u32
}

fn pitch(id: usize) -> f64 {
    140.0 + 37.0 * (id % 23) as f64
}

/// Frames of silence that open and close every utterance.
const EDGE_SILENCE: u32 = 3;

pub struct SyntheticUtterance {
    pub id: String,
    pub record: AlignmentRecord,
    pub clip: AudioClip,
}

fn render(phones: &[(usize, u32)], ids_are_silence: impl Fn(usize) -> bool) -> Vec<f32> {
    let mut out = Vec::new();
    let mut phase = 0.0f64;
    for &(id, d) in phones {
        let n = d as usize * HOP;
        if ids_are_silence(id) {
            out.extend(std::iter::repeat_n(0.0, n));
            continue;
        }
        let f = pitch(id);
        let step = std::f64::consts::TAU * f / SAMPLE_RATE as f64;
        for i in 0..n {
            // Short attack/release keeps phone boundaries audible in the mel.
            let env = ((i.min(n - 1 - i) as f64) / 120.0).min(1.0);
            let s = phase.sin() + 0.5 * (2.0 * phase).sin() + 0.25 * (3.0 * phase).sin();
            out.push((0.25 * env * s) as f32);
            phase += step;
        }
    }
    out
}

pub fn generate(cfg: &SyntheticConfig, inv: &Inventory) -> Result<Vec<SyntheticUtterance>> {
    let first = inv.unk() + 1;
    if cfg.phoneme_pool == 0 || first + cfg.phoneme_pool > inv.len() {
        return Err(Error::Config(format!(
            "phoneme pool of {} does not fit the inventory",
            cfg.phoneme_pool
        )));
    }
    if cfg.min_words == 0
        || cfg.min_words > cfg.max_words
        || cfg.min_phones_per_word == 0
        || cfg.min_phones_per_word > cfg.max_phones_per_word
    {
        return Err(Error::Config("invalid word or phone count range".into()));
    }
    if !(0.0..=0.5).contains(&cfg.duration_noise) {
        return Err(Error::Config("duration_noise must lie in [0, 0.5]".into()));
    }
    let sil = inv.sil();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.utterances);
    for u in 0..cfg.utterances {
        let n_words = rng.gen_range(cfg.min_words..=cfg.max_words);
        let mut phones: Vec<(usize, u32, Option<usize>)> = vec![(sil, EDGE_SILENCE, None)];
        let mut word_names = Vec::new();
        for w in 0..n_words {
            let n = rng.gen_range(cfg.min_phones_per_word..=cfg.max_phones_per_word);
            let mut name = String::new();
            for _ in 0..n {
                let id = first + rng.gen_range(0..cfg.phoneme_pool);
                let r: f64 = rng.gen();
                let d = base_duration(id) as i64
                    + if r < cfg.duration_noise {
                        -1
                    } else if r < 2.0 * cfg.duration_noise {
                        1
                    } else {
                        0
                    };
                phones.push((id, d.max(1) as u32, Some(w)));
                name.push_str(&inv.symbol(id).unwrap_or("?").to_ascii_lowercase());
            }
            word_names.push(name);
        }
        phones.push((sil, EDGE_SILENCE, None));

        let samples = render(
            &phones.iter().map(|&(id, d, _)| (id, d)).collect::<Vec<_>>(),
            |id| id == sil,
        );
        let mut t = 0u32;
        let mut intervals = Vec::with_capacity(phones.len());
        let mut words: Vec<WordInterval> = Vec::new();
        for &(id, d, w) in &phones {
            let (start, end) = (t as f64 * HOP_SECONDS, (t + d) as f64 * HOP_SECONDS);
            intervals.push(PhoneInterval {
                phone: if id == sil { SIL.to_string() } else { inv.symbol(id).unwrap().to_string() },
                start,
                end,
                word: w,
            });
            if let Some(w) = w {
                if words.len() == w {
                    words.push(WordInterval {
                        word: word_names[w].clone(),
                        start,
                        end,
                    });
                } else {
                    words[w].end = end;
                }
            }
            t += d;
        }
        let id = format!("syn{u:04}");
        out.push(SyntheticUtterance {
            record: AlignmentRecord {
                audio: format!("{id}.wav").into(),
                sample_rate: SAMPLE_RATE,
                transcript: word_names.join(" "),
                phones: intervals,
                words,
            },
            clip: AudioClip::new(samples, SAMPLE_RATE)?,
            id,
        });
    }
    Ok(out)
}

/// Generates the corpus directly as in-memory utterances.
pub fn synthetic_utterances(cfg: &SyntheticConfig, inv: &Inventory, fb: &MelFilterbank) -> Result<Vec<Utterance>> {
    generate(cfg, inv)?
        .into_iter()
        .map(|s| Utterance::from_audio(s.id, s.record, &s.clip, inv, fb))
        .collect()
}

/// Writes WAV files, alignment JSON and a `manifest.ndjson` into `dir`;
/// returns the manifest path.
pub fn write_corpus(dir: &Path, cfg: &SyntheticConfig, inv: &Inventory) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cfg.utterances);
    for s in generate(cfg, inv)? {
        write_wav(&dir.join(&s.record.audio), &s.clip)?;
        let name = format!("{}.json", s.id);
        write_atomic(&dir.join(&name), s.record.to_json().as_bytes())?;
        entries.push(ManifestEntry {
            id: s.id,
            alignment: name.into(),
        });
    }
    let manifest = dir.join("manifest.ndjson");
    write_atomic(&manifest, manifest_text(&entries).as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset::load_dataset;

    #[test]
    fn durations_follow_the_phoneme_rule() {
        let inv = Inventory::arpabet();
        let fb = MelFilterbank::standard().unwrap();
        let utts = synthetic_utterances(&SyntheticConfig::default(), &inv, &fb).unwrap();
        assert_eq!(utts.len(), 8);
        for u in &utts {
            for (&id, &d) in u.phonemes.ids().iter().zip(&u.durations.frames) {
                let expect = if id == inv.sil() { EDGE_SILENCE } else { base_duration(id) };
                assert_eq!(d, expect);
            }
            assert_eq!(u.mel.frames, u.durations.total());
            assert!(!u.maskable_words().is_empty());
        }
    }

    #[test]
    fn generation_is_seeded() {
        let inv = Inventory::arpabet();
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg, &inv).unwrap();
        let b = generate(&cfg, &inv).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.record == y.record && x.clip == y.clip));
    }

    #[test]
    fn written_corpus_loads_back() {
        let inv = Inventory::arpabet();
        let fb = MelFilterbank::standard().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            utterances: 3,
            ..Default::default()
        };
        let manifest = write_corpus(dir.path(), &cfg, &inv).unwrap();
        let utts = load_dataset(&manifest, &inv, &fb).unwrap();
        let direct = synthetic_utterances(&cfg, &inv, &fb).unwrap();
        assert_eq!(utts.len(), 3);
        for (a, b) in utts.iter().zip(&direct) {
            assert_eq!(a.phonemes, b.phonemes);
            assert_eq!(a.durations, b.durations);
        }
    }
}
