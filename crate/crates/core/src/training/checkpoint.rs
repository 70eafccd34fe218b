use std::path::Path;

use serde_json::{Map, Value};

use super::stats::MelStats;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Archive;

const CONFIG_KEY: &str = "model_config";
const STATS_KEY: &str = "mel_stats";

/// Trained weights with everything inference needs besides the inventory.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub stats: MelStats,
    /// Free-form fields (epoch, step, losses) carried through save/load.
    pub extra: Map<String, Value>,
}

impl Checkpoint {
    pub fn new(model: Model<f32>, stats: MelStats) -> Self {
        Self {
            model,
            stats,
            extra: Map::new(),
        }
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut archive = Archive::new(&self.model.params);
        archive.metadata = self.extra.clone();
        archive
            .metadata
            .insert(CONFIG_KEY.into(), serde_json::to_value(&self.model.config)?);
        archive
            .metadata
            .insert(STATS_KEY.into(), serde_json::to_value(&self.stats)?);
        Ok(archive)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.to_archive()?.save(dir)
    }

    pub fn from_archive(archive: Archive, origin: &str) -> Result<Self> {
        let mut extra = archive.metadata;
        let missing = |key: &str| Error::Parse {
            path: origin.to_string(),
            msg: format!("checkpoint metadata lacks {key}"),
        };
        let config: ModelConfig =
            serde_json::from_value(extra.remove(CONFIG_KEY).ok_or_else(|| missing(CONFIG_KEY))?)?;
        let stats: MelStats = serde_json::from_value(extra.remove(STATS_KEY).ok_or_else(|| missing(STATS_KEY))?)?;
        let mut model = Model::new(config, 0)?;
        model.params.load_values(&archive.params)?;
        Ok(Self { model, stats, extra })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_archive(Archive::load(dir)?, &dir.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::checkpoint::{BLOB_FILE, MANIFEST_FILE};

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = Model::<f32>::new(ModelConfig::tiny(), 9).unwrap();
        let mut ck = Checkpoint::new(model, MelStats::identity(80));
        ck.extra.insert("epoch".into(), 3.into());
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        ck.save(&a).unwrap();
        let loaded = Checkpoint::load(&a).unwrap();
        loaded.save(&b).unwrap();
        for f in [MANIFEST_FILE, BLOB_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
        assert_eq!(loaded.model.params, ck.model.params);
        assert_eq!(loaded.extra["epoch"], 3);
    }
}
