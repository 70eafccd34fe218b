use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};

/// Phonemes of a full sentence with word membership and insertion flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    ids: Vec<usize>,
    word_index: Vec<Option<usize>>,
    inserted: Vec<bool>,
}

impl PhonemeSequence {
    pub fn new(
        ids: Vec<usize>,
        word_index: Vec<Option<usize>>,
        inserted: Vec<bool>,
        vocab: usize,
    ) -> Result<Self> {
        if ids.len() != word_index.len() || ids.len() != inserted.len() {
            return Err(Error::Shape(format!(
                "phoneme sequence parts disagree: {} ids, {} word indices, {} flags",
                ids.len(),
                word_index.len(),
                inserted.len()
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Input(format!("phoneme id {id} outside inventory of {vocab}")));
        }
        let words: Vec<usize> = word_index.iter().flatten().copied().collect();
        if words.windows(2).any(|w| w[1] < w[0]) {
            return Err(contract_err!("word indices must be non-decreasing"));
        }
        let seq = Self {
            ids,
            word_index,
            inserted,
        };
        if seq.inserted.iter().any(|&f| f) {
            let span = seq.inserted_span();
            if seq.inserted[span].iter().any(|&f| !f) {
                return Err(contract_err!("inserted phonemes must form one contiguous run"));
            }
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn word_index(&self) -> &[Option<usize>] {
        &self.word_index
    }

    pub fn inserted(&self) -> &[bool] {
        &self.inserted
    }

    /// Smallest range covering every inserted phoneme (empty if none).
    pub fn inserted_span(&self) -> Range<usize> {
        let start = self.inserted.iter().position(|&f| f);
        let end = self.inserted.iter().rposition(|&f| f);
        match (start, end) {
            (Some(s), Some(e)) => s..e + 1,
            _ => 0..0,
        }
    }

    /// Phoneme range belonging to word `w` (empty if absent).
    pub fn word_span(&self, w: usize) -> Range<usize> {
        let start = self.word_index.iter().position(|&x| x == Some(w));
        let end = self.word_index.iter().rposition(|&x| x == Some(w));
        match (start, end) {
            (Some(s), Some(e)) => s..e + 1,
            _ => 0..0,
        }
    }

    /// Distinct word indices in order of appearance.
    pub fn words(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.word_index.iter().flatten().copied().collect();
        out.dedup();
        out
    }

    /// Copy with the phonemes in `span` flagged inserted and all others not.
    pub fn with_inserted(&self, span: Range<usize>) -> Result<Self> {
        if span.end > self.len() || span.start > span.end {
            return Err(contract_err!("span {span:?} outside sequence of {}", self.len()));
        }
        let mut out = self.clone();
        for (i, f) in out.inserted.iter_mut().enumerate() {
            *f = span.contains(&i);
        }
        Ok(out)
    }

    /// Inserts `ids` before position `at`, flagged inserted and tagged with
    /// word `word`; later word indices shift up by one.
    pub fn splice_in(&self, at: usize, ids: &[usize], word: usize, vocab: usize) -> Result<Self> {
        if at > self.len() {
            return Err(contract_err!("insertion point {at} beyond {} phonemes", self.len()));
        }
        let shift = |w: Option<usize>| w.map(|w| if w >= word { w + 1 } else { w });
        let mut out_ids = self.ids[..at].to_vec();
        let mut out_words: Vec<_> = self.word_index[..at].iter().map(|&w| shift(w)).collect();
        out_ids.extend_from_slice(ids);
        out_words.extend(std::iter::repeat_n(Some(word), ids.len()));
        out_ids.extend_from_slice(&self.ids[at..]);
        out_words.extend(self.word_index[at..].iter().map(|&w| shift(w)));
        let mut inserted = vec![false; out_ids.len()];
        inserted[at..at + ids.len()].fill(true);
        Self::new(out_ids, out_words, inserted, vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationKind {
    Reference,
    Predicted,
}

/// Per-phoneme frame counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationTrack {
    pub frames: Vec<u32>,
    pub kind: DurationKind,
}

impl DurationTrack {
    pub fn reference(frames: Vec<u32>) -> Self {
        Self {
            frames,
            kind: DurationKind::Reference,
        }
    }

    pub fn total(&self) -> usize {
        self.frames.iter().map(|&d| d as usize).sum()
    }

    pub fn offset_of(&self, index: usize) -> usize {
        self.frames[..index].iter().map(|&d| d as usize).sum()
    }

    /// Reference track with `span` zeroed, the model's view of an insertion.
    pub fn masked(&self, span: Range<usize>) -> Self {
        let mut frames = self.frames.clone();
        frames[span].fill(0);
        Self::reference(frames)
    }
}

/// Location of one edited word in the output sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub phoneme_span: Range<usize>,
    /// First frame of the edited region.
    pub frame_offset: usize,
    /// Frames the region occupies in the original recording (0 for an
    /// insertion into unedited audio).
    pub original_frames: usize,
    /// Frames the region occupies in the synthesized sentence.
    pub edited_frames: usize,
    pub word_text: String,
}

impl EditScript {
    /// The no-op edit.
    pub fn empty() -> Self {
        Self {
            phoneme_span: 0..0,
            frame_offset: 0,
            original_frames: 0,
            edited_frames: 0,
            word_text: String::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.phoneme_span.is_empty() && self.original_frames == 0 && self.edited_frames == 0
    }
}
