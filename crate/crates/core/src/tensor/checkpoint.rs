//! Parameter archive: a JSON manifest plus one flat little-endian `f32` blob.
//!
//! ```text
//! <dir>/manifest.json   names, shapes, dtype and byte ranges, free-form metadata
//! <dir>/params.bin      concatenated tensor data
//! ```
//!
//! Writes go through a temporary file and a rename, so an interrupted save
//! never leaves a half-written archive behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Element, ParamStore, Tensor};
use crate::error::{shape_err, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    /// Caller-owned data (model config, normalization statistics, ...).
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

/// Tensors plus metadata, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub params: ParamStore<f32>,
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Archive {
    pub fn new<F: Element>(params: &ParamStore<F>) -> Self {
        Self {
            params: params.cast(),
            metadata: serde_json::Map::new(),
        }
    }

    /// Single-tensor archive, used for dumping spectrograms.
    pub fn single(name: &str, tensor: Tensor<f32>) -> Result<Self> {
        let mut params = ParamStore::new();
        params.add(name, tensor)?;
        Ok(Self {
            params,
            metadata: serde_json::Map::new(),
        })
    }

    pub fn manifest(&self) -> Manifest {
        let mut offset = 0u64;
        let tensors = self
            .params
            .iter()
            .map(|(_, name, t)| {
                let nbytes = (t.numel() * 4) as u64;
                let e = TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    dtype: "f32".into(),
                    offset,
                    nbytes,
                };
                offset += nbytes;
                e
            })
            .collect();
        Manifest {
            format_version: FORMAT_VERSION,
            blob: BLOB_FILE.into(),
            tensors,
            metadata: self.metadata.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blob = Vec::with_capacity(self.params.num_scalars() * 4);
        for (_, _, t) in self.params.iter() {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = serde_json::to_vec_pretty(&self.manifest())?;
        write_atomic(&dir.join(BLOB_FILE), &blob)?;
        write_atomic(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.display().to_string(),
            msg: e.to_string(),
        })?;
        let bpath = dir.join(&manifest.blob);
        let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let mut params = ParamStore::new();
        for e in &manifest.tensors {
            if e.dtype != "f32" {
                return Err(Error::Parse {
                    path: mpath.display().to_string(),
                    msg: format!("tensor {} has unsupported dtype {}", e.name, e.dtype),
                });
            }
            let numel: usize = e.shape.iter().product();
            if e.nbytes as usize != numel * 4 {
                return Err(shape_err!(
                    "tensor {} declares {} bytes for shape {:?}",
                    e.name,
                    e.nbytes,
                    e.shape
                ));
            }
            let start = e.offset as usize;
            let bytes = blob.get(start..start + e.nbytes as usize).ok_or_else(|| {
                shape_err!("tensor {} extends past the end of {}", e.name, manifest.blob)
            })?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.add(e.name.clone(), Tensor::new(e.shape.clone(), data)?)?;
        }
        Ok(Self {
            params,
            metadata: manifest.metadata,
        })
    }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = {
        let mut name = path
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(format!(".tmp{}", std::process::id()));
        path.with_file_name(name)
    };
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
