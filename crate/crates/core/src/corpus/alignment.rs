//! Forced-alignment records and their conversion to frame durations.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::inventory::{Inventory, SIL, UNK};
use super::sequence::{DurationKind, DurationTrack, PhonemeSequence};
use crate::error::{Error, Result};

/// Default frame hop in seconds (300 samples at 24 kHz).
pub const HOP_SECONDS: f64 = 0.0125;

/// Gaps or overlaps smaller than this are treated as rounding noise.
const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneInterval {
    pub phone: String,
    pub start: f64,
    pub end: f64,
    /// Index into `words`; absent for silences.
    #[serde(default)]
    pub word: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordInterval {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub audio: PathBuf,
    pub sample_rate: u32,
    pub transcript: String,
    pub phones: Vec<PhoneInterval>,
    #[serde(default)]
    pub words: Vec<WordInterval>,
}

/// Line (1-based) of the `n`-th `"phone"` key, for error messages.
fn line_of_phone(text: &str, n: usize) -> Option<usize> {
    let offset = text.match_indices("\"phone\"").nth(n)?.0;
    Some(text[..offset].matches('\n').count() + 1)
}

impl AlignmentRecord {
    pub fn end_seconds(&self) -> f64 {
        self.phones.last().map_or(0.0, |p| p.end)
    }

    /// Parses and validates alignment JSON. `origin` names the source in
    /// error messages. Gaps between phones become silence intervals and
    /// labels outside `inv` are rewritten to UNK.
    pub fn parse_str(text: &str, origin: &str, inv: &Inventory) -> Result<Self> {
        let perr = |msg: String| Error::Parse {
            path: origin.to_string(),
            msg,
        };
        let raw: AlignmentRecord = serde_json::from_str(text).map_err(|e| {
            perr(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        let at = |i: usize| match line_of_phone(text, i) {
            Some(l) => format!("line {l}, phones[{i}]"),
            None => format!("phones[{i}]"),
        };

        if raw.phones.is_empty() {
            return Err(perr("alignment has no phones".into()));
        }
        if raw.sample_rate == 0 {
            return Err(perr("sample_rate must be positive".into()));
        }
        let mut phones: Vec<PhoneInterval> = Vec::with_capacity(raw.phones.len());
        let mut last_word: Option<usize> = None;
        for (i, p) in raw.phones.iter().enumerate() {
            if !(p.start.is_finite() && p.end.is_finite()) || p.start < 0.0 || p.end < p.start {
                return Err(perr(format!("{}: invalid interval [{}, {}]", at(i), p.start, p.end)));
            }
            if let Some(w) = p.word {
                if w >= raw.words.len() {
                    return Err(perr(format!(
                        "{}: word index {w} but only {} words",
                        at(i),
                        raw.words.len()
                    )));
                }
                if last_word.is_some_and(|lw| w < lw) {
                    return Err(perr(format!("{}: word index decreases", at(i))));
                }
                last_word = Some(w);
            }
            let prev_end = phones.last().map_or(0.0, |q| q.end);
            if let Some(prev) = phones.last() {
                if p.start < prev.start {
                    return Err(perr(format!("{}: intervals are not sorted", at(i))));
                }
                if p.start < prev.end - TIME_EPS {
                    return Err(perr(format!(
                        "{}: interval [{}, {}] overlaps previous ending at {}",
                        at(i),
                        p.start,
                        p.end,
                        prev.end
                    )));
                }
            }
            if p.start > prev_end + TIME_EPS {
                phones.push(PhoneInterval {
                    phone: SIL.to_string(),
                    start: prev_end,
                    end: p.start,
                    word: None,
                });
            }
            let mut p = p.clone();
            if inv.id(&p.phone).is_none() && inv.lookup(&p.phone) == inv.unk() {
                p.phone = UNK.to_string();
            }
            phones.push(p);
        }
        Ok(AlignmentRecord { phones, ..raw })
    }

    pub fn load(path: &Path, inv: &Inventory) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, &path.display().to_string(), inv)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("alignment records always serialize")
    }

    /// Phonemes and reference durations with boundaries at `round(t / hop)`.
    ///
    /// Durations telescope, so they sum to the rounded end time exactly.
    /// Phones that round to zero frames are folded into their neighbor.
    pub fn to_frames(&self, inv: &Inventory, hop: f64) -> Result<(PhonemeSequence, DurationTrack)> {
        let boundary = |t: f64| (t / hop + 0.5 + 1e-9).floor() as i64;
        let mut ids = Vec::with_capacity(self.phones.len());
        let mut words = Vec::with_capacity(self.phones.len());
        let mut frames = Vec::with_capacity(self.phones.len());
        let mut prev = 0i64;
        for p in &self.phones {
            let b = boundary(p.end).max(prev);
            let d = (b - prev) as u32;
            prev = b;
            if d == 0 {
                warn!(
                    "phone {:?} at {:.4}s is shorter than a frame; merged into neighbor",
                    p.phone, p.start
                );
                continue;
            }
            ids.push(inv.lookup(&p.phone));
            words.push(p.word);
            frames.push(d);
        }
        if frames.is_empty() {
            return Err(Error::Input(format!(
                "alignment for {} is shorter than one frame",
                self.audio.display()
            )));
        }
        let inserted = vec![false; ids.len()];
        Ok((
            PhonemeSequence::new(ids, words, inserted, inv.len())?,
            DurationTrack {
                frames,
                kind: DurationKind::Reference,
            },
        ))
    }
}

/// Frame durations for a record at the default hop.
pub fn seconds_to_frames(rec: &AlignmentRecord, inv: &Inventory) -> Result<DurationTrack> {
    Ok(rec.to_frames(inv, HOP_SECONDS)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(phones: &[(&str, f64, f64, Option<usize>)]) -> String {
        let phones: Vec<_> = phones
            .iter()
            .map(|(p, s, e, w)| serde_json::json!({"phone": p, "start": s, "end": e, "word": w}))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "audio": "a.wav", "sample_rate": 24000, "transcript": "at",
            "phones": phones,
            "words": [{"word": "at", "start": 0.0, "end": 1.0}],
        }))
        .unwrap()
    }

    fn parse(text: &str) -> Result<AlignmentRecord> {
        AlignmentRecord::parse_str(text, "test.json", &Inventory::arpabet())
    }

    #[test]
    fn two_phones() {
        let rec = parse(&record(&[("AH0", 0.0, 0.05, Some(0)), ("T", 0.05, 0.1, Some(0))])).unwrap();
        assert_eq!(rec.phones.len(), 2);
        let d = seconds_to_frames(&rec, &Inventory::arpabet()).unwrap();
        assert_eq!(d.frames, vec![4, 4]);
    }

    #[test]
    fn single_frame_phone() {
        let rec = parse(&record(&[("T", 0.0, 0.0125, Some(0))])).unwrap();
        assert_eq!(seconds_to_frames(&rec, &Inventory::arpabet()).unwrap().frames, vec![1]);
    }

    #[test]
    fn overlap_is_rejected_with_line() {
        let err = parse(&record(&[("AH0", 0.0, 0.05, Some(0)), ("T", 0.04, 0.1, Some(0))])).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(msg.contains("overlaps") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn unsorted_is_rejected() {
        let err = parse(&record(&[("AH0", 0.5, 0.6, Some(0)), ("T", 0.1, 0.2, Some(0))])).unwrap_err();
        assert!(err.to_string().contains("sorted"));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse("{\n  \"audio\": \"a.wav\",\n  oops\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn gap_becomes_silence() {
        let rec = parse(&record(&[("AH0", 0.0, 0.05, Some(0)), ("T", 0.08, 0.1, Some(0))])).unwrap();
        assert_eq!(rec.phones.len(), 3);
        let gap = &rec.phones[1];
        assert_eq!(gap.phone, SIL);
        assert_eq!((gap.start, gap.end, gap.word), (0.05, 0.08, None));
    }

    #[test]
    fn unknown_label_becomes_unk() {
        let rec = parse(&record(&[("QX", 0.0, 0.05, Some(0))])).unwrap();
        assert_eq!(rec.phones[0].phone, UNK);
    }

    #[test]
    fn durations_telescope() {
        let rec = parse(&record(&[
            ("sil", 0.0, 0.0313, None),
            ("AH0", 0.0313, 0.5071, Some(0)),
            ("T", 0.5071, 1.0125, Some(0)),
        ]))
        .unwrap();
        let d = seconds_to_frames(&rec, &Inventory::arpabet()).unwrap();
        assert_eq!(d.frames.iter().sum::<u32>(), 81);
    }

    #[test]
    fn sub_frame_phone_is_merged() {
        let rec = parse(&record(&[
            ("AH0", 0.0, 0.05, Some(0)),
            ("T", 0.05, 0.052, Some(0)),
            ("S", 0.052, 0.1, Some(0)),
        ]))
        .unwrap();
        let (seq, d) = rec.to_frames(&Inventory::arpabet(), HOP_SECONDS).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(d.frames, vec![4, 4]);
    }

    #[test]
    fn serialize_round_trip() {
        let rec = parse(&record(&[("AH0", 0.0, 0.05, Some(0)), ("T", 0.08, 0.1, Some(0))])).unwrap();
        assert_eq!(parse(&rec.to_json()).unwrap(), rec);
    }
}
