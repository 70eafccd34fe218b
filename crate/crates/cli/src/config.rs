//! Run configuration: an optional JSON file whose fields command-line flags
//! override.

use std::path::{Path, PathBuf};

use anyhow::Context;
use infill::dsp::GriffinLimConfig;
use infill::model::ModelConfig;
use infill::training::TrainConfig;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{io_error, usage};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub valid_manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `tiny`, `small` or `default`.
    pub preset: Option<String>,
    /// Model fields applied over the preset.
    pub model: Option<serde_json::Map<String, Value>>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_steps: Option<usize>,
    pub griffin_lim_iters: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_error(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        flag.or(self.seed)
            .ok_or_else(|| usage("--seed is required (or \"seed\" in the config file)"))
    }

    pub fn model_config(&self, preset_flag: Option<&str>) -> anyhow::Result<ModelConfig> {
        let preset = preset_flag.or(self.preset.as_deref()).unwrap_or("default");
        let base = match preset {
            "tiny" => ModelConfig::tiny(),
            "small" => ModelConfig::small(),
            "default" => ModelConfig::default(),
            other => return Err(usage(format!("unknown model preset {other:?} (tiny, small, default)"))),
        };
        let mut value = serde_json::to_value(&base).context("serializing model config")?;
        if let (Some(fields), Value::Object(obj)) = (&self.model, &mut value) {
            for (k, v) in fields {
                if !obj.contains_key(k) {
                    return Err(usage(format!("unknown model field {k:?}")));
                }
                obj.insert(k.clone(), v.clone());
            }
        }
        let cfg: ModelConfig = serde_json::from_value(value).map_err(|e| usage(format!("invalid model config: {e}")))?;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self, flags: &TrainFlags, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: flags.epochs.or(self.epochs).unwrap_or(d.epochs),
            batch_size: flags.batch_size.or(self.batch_size).unwrap_or(d.batch_size),
            learning_rate: flags.learning_rate.or(self.learning_rate).unwrap_or(d.learning_rate),
            seed,
            max_steps: flags.max_steps.or(self.max_steps),
        }
    }

    pub fn griffin_lim(&self, iters: Option<usize>, seed: u64) -> GriffinLimConfig {
        GriffinLimConfig {
            iters: iters.or(self.griffin_lim_iters).unwrap_or(GriffinLimConfig::default().iters),
            seed,
        }
    }

    pub fn path(flag: Option<&Path>, file: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| file.clone())
            .ok_or_else(|| usage(format!("{what} is required")))
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
}

/// Fails with an I/O error unless `path` exists.
pub fn require_exists(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(io_error(format!("{} does not exist", path.display())))
    }
}
