//! Binary checkpoint container: a JSON manifest plus named f32 blobs.
//!
//! Layout: magic `NDCP`, u32 LE format version, u64 LE manifest length,
//! manifest JSON, then the raw little-endian f32 data of every array in
//! manifest order. Manifest maps are sorted, so serialization is
//! byte-deterministic.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{NdiffError, Result};
use crate::real::Real;

const MAGIC: &[u8; 4] = b"NDCP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    meta: BTreeMap<String, String>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

/// An in-memory checkpoint: string metadata plus named f32 arrays in
/// insertion order.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    arrays: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.insert(key.to_string(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(|s| s.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.iter().any(|(n, _, _)| n == name)
    }

    /// Stores an array under a unique name, casting to f32 storage.
    pub fn put<T: Real>(&mut self, name: &str, array: &DenseArray<T>) -> Result<()> {
        if self.contains(name) {
            return Err(NdiffError::Checkpoint {
                path: "<memory>".into(),
                detail: format!("duplicate array name `{}`", name),
            });
        }
        let data: Vec<f32> = array.data().iter().map(|v| v.to_f32()).collect();
        self.arrays
            .push((name.to_string(), array.shape().to_vec(), data));
        Ok(())
    }

    pub fn get<T: Real>(&self, name: &str) -> Result<DenseArray<T>> {
        let (_, shape, data) = self
            .arrays
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| NdiffError::Checkpoint {
                path: "<memory>".into(),
                detail: format!("missing array `{}`", name),
            })?;
        let cast: Vec<T> = data.iter().map(|&v| T::from_f32(v)).collect();
        DenseArray::new(shape.clone(), cast)
    }

    pub fn get_shared<T: Real>(&self, name: &str) -> Result<Arc<DenseArray<T>>> {
        Ok(Arc::new(self.get(name)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, shape, _)| ArrayEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let mjson = serde_json::to_vec(&manifest).expect("manifest serialization");
        let blob_len: usize = self.arrays.iter().map(|(_, _, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(16 + mjson.len() + blob_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(mjson.len() as u64).to_le_bytes());
        out.extend_from_slice(&mjson);
        for (_, _, data) in &self.arrays {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let err = |detail: String| NdiffError::Checkpoint {
            path: origin.to_string(),
            detail,
        };
        if bytes.len() < 16 || &bytes[0..4] != MAGIC {
            return Err(err("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(err(format!("unsupported format version {}", version)));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + mlen {
            return Err(err("truncated manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[16..16 + mlen])
            .map_err(|e| err(format!("manifest parse: {}", e)))?;
        let mut offset = 16 + mlen;
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for entry in manifest.arrays {
            let count: usize = entry.shape.iter().product();
            let nbytes = count * 4;
            if bytes.len() < offset + nbytes {
                return Err(err(format!("truncated blob for `{}`", entry.name)));
            }
            let mut data = Vec::with_capacity(count);
            for chunk in bytes[offset..offset + nbytes].chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            offset += nbytes;
            arrays.push((entry.name, entry.shape, data));
        }
        Ok(Self {
            meta: manifest.meta,
            arrays,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let mut f = std::fs::File::create(path).map_err(|e| NdiffError::Checkpoint {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        f.write_all(&bytes).map_err(|e| NdiffError::Checkpoint {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| NdiffError::Checkpoint {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
