use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::alignment::AlignmentRecord;
use super::example::Utterance;
use super::inventory::Inventory;
use crate::dsp::MelFilterbank;
use crate::error::{Error, Result};

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Alignment JSON, relative to the manifest's directory.
    pub alignment: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn manifest_text(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries always serialize") + "\n")
        .collect()
}

/// Loads every utterance listed in a manifest. Audio paths inside an
/// alignment resolve against the alignment file's directory.
pub fn load_dataset(manifest: &Path, inv: &Inventory, fb: &MelFilterbank) -> Result<Vec<Utterance>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Input(format!("{} lists no utterances", manifest.display())));
    }
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let path = base.join(&e.alignment);
        let record = AlignmentRecord::load(&path, inv)?;
        let dir = path.parent().unwrap_or(base);
        out.push(Utterance::load(e.id, record, dir, inv, fb)?);
    }
    info!("loaded {} utterances from {}", out.len(), manifest.display());
    Ok(out)
}
