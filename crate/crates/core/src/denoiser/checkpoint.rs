//! Checkpoint files: `NOCSCKPT`, a little-endian u32 header length, a JSON
//! header, then every parameter block as little-endian f32 in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::ScheduleConfig;
use super::unet::{UNetConfig, UNetParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"NOCSCKPT";
pub const CHECKPOINT_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    architecture: UNetConfig,
    schedule: ScheduleConfig,
    category_table_rows: usize,
    category_names: Vec<String>,
    pca_basis: Option<String>,
    blocks: Vec<BlockEntry>,
}

/// A trained model with everything needed to run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: UNetParams<f32>,
    pub schedule: ScheduleConfig,
    /// Names for category ids `1..`; id 0 is "unknown".
    pub category_names: Vec<String>,
    /// PCA basis file, relative to the checkpoint's directory.
    pub pca_basis: Option<String>,
}

impl Checkpoint {
    pub fn category_id(&self, name: &str) -> Option<usize> {
        self.category_names.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.params.config();
        let mut blocks = Vec::new();
        let mut offset = 0;
        for spec in self.params.specs() {
            blocks.push(BlockEntry {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                offset,
            });
            offset += spec.len() * 4;
        }
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            architecture: cfg.clone(),
            schedule: self.schedule,
            category_table_rows: cfg.categories + 1,
            category_names: self.category_names.clone(),
            pca_basis: self.pca_basis.clone(),
            blocks,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::invalid(e.to_string()))?;
        let mut out = Vec::with_capacity(12 + json.len() + offset);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for block in self.params.values() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(path, m);
        if bytes.len() < 12 || bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let data_start = 12usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[12..data_start]).map_err(|e| bad(format!("header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        if header.category_table_rows != header.architecture.categories + 1 {
            return Err(bad("category table size disagrees with architecture".into()));
        }
        let data = &bytes[data_start..];
        let mut expected = 0;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for b in header.blocks {
            let n: usize = b.shape.iter().product();
            if b.offset != expected || b.offset + 4 * n > data.len() {
                return Err(bad(format!("block {} out of place or truncated", b.name)));
            }
            let vals = data[b.offset..b.offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            expected += 4 * n;
            blocks.push((b.name, b.shape, vals));
        }
        if expected != data.len() {
            return Err(bad(format!("{} trailing bytes", data.len() - expected)));
        }
        let params = UNetParams::from_blocks(&header.architecture, blocks).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint {
            params,
            schedule: header.schedule,
            category_names: header.category_names,
            pca_basis: header.pca_basis,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
