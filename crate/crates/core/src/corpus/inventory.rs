use std::collections::HashMap;

use log::warn;

use crate::error::{Error, Result};

pub const PAD: &str = "PAD";
pub const SIL: &str = "SIL";
pub const SP: &str = "SP";
pub const UNK: &str = "UNK";

const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];
const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

/// Phoneme symbol table: ARPAbet with stress markers plus PAD/SIL/SP/UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Inventory {
    fn default() -> Self {
        Self::arpabet()
    }
}

impl Inventory {
    pub fn arpabet() -> Self {
        let mut symbols: Vec<String> = [PAD, SIL, SP, UNK].iter().map(|s| s.to_string()).collect();
        symbols.extend(CONSONANTS.iter().map(|s| s.to_string()));
        for v in VOWELS {
            for stress in 0..3 {
                symbols.push(format!("{v}{stress}"));
            }
        }
        Self::from_symbols(symbols).expect("built-in inventory has unique symbols")
    }

    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate phoneme symbol {s}")));
            }
        }
        for required in [PAD, SIL, UNK] {
            if !index.contains_key(required) {
                return Err(Error::Config(format!("inventory lacks {required}")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// One symbol per line, in id order.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_symbols(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = self.symbols.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn pad(&self) -> usize {
        self.index[PAD]
    }

    pub fn sil(&self) -> usize {
        self.index[SIL]
    }

    pub fn unk(&self) -> usize {
        self.index[UNK]
    }

    pub fn is_silence(&self, id: usize) -> bool {
        matches!(self.symbol(id), Some(SIL) | Some(SP))
    }

    /// Maps an aligner label to an id. Silence spellings map to SIL/SP, a
    /// vowel without stress marker to its unstressed variant, and anything
    /// else unknown to UNK with a warning.
    pub fn lookup(&self, label: &str) -> usize {
        if let Some(id) = self.id(label) {
            return id;
        }
        let upper = label.trim().to_ascii_uppercase();
        let canonical = match upper.as_str() {
            "" | "SIL" | "<SIL>" | "SILENCE" => Some(SIL.to_string()),
            "SP" | "SPN" | "<SP>" => Some(SP.to_string()),
            v if VOWELS.contains(&v) => Some(format!("{v}0")),
            _ => None,
        };
        if let Some(id) = canonical.or(Some(upper)).and_then(|c| self.id(&c)) {
            return id;
        }
        warn!("unknown phone label {label:?}; mapping to {UNK}");
        self.unk()
    }

    /// Parses a whitespace-separated phoneme string; every symbol must be a
    /// non-special inventory entry.
    pub fn parse_phonemes(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|tok| {
                let id = self.id(tok).or_else(|| {
                    let upper = tok.to_ascii_uppercase();
                    self.id(&upper).or_else(|| {
                        VOWELS
                            .contains(&upper.as_str())
                            .then(|| self.id(&format!("{upper}0")))
                            .flatten()
                    })
                });
                match id {
                    Some(id) if id != self.pad() && id != self.unk() => Ok(id),
                    _ => Err(Error::Input(format!("unknown phoneme {tok:?}"))),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arpabet_size_and_specials() {
        let inv = Inventory::arpabet();
        assert_eq!(inv.len(), 4 + 24 + 45);
        assert_eq!(inv.pad(), 0);
        assert_eq!(inv.symbol(inv.sil()), Some(SIL));
    }

    #[test]
    fn aligner_labels_are_normalized() {
        let inv = Inventory::arpabet();
        assert_eq!(inv.lookup("sil"), inv.sil());
        assert_eq!(inv.lookup(""), inv.sil());
        assert_eq!(inv.lookup("spn"), inv.id(SP).unwrap());
        assert_eq!(inv.lookup("AH"), inv.id("AH0").unwrap());
        assert_eq!(inv.lookup("t"), inv.id("T").unwrap());
        assert_eq!(inv.lookup("XYZ"), inv.unk());
    }

    #[test]
    fn text_round_trip() {
        let inv = Inventory::arpabet();
        assert_eq!(Inventory::parse(&inv.to_text()).unwrap(), inv);
    }

    #[test]
    fn phoneme_strings() {
        let inv = Inventory::arpabet();
        let ids = inv.parse_phonemes("HH AH0 L OW1").unwrap();
        assert_eq!(ids.len(), 4);
        assert!(inv.parse_phonemes("HH QQ").is_err());
        assert!(inv.parse_phonemes("PAD").is_err());
        assert!(inv.parse_phonemes("").unwrap().is_empty());
    }
}
