//! Binary feature files: `NFEA`, then height, width, dim as little-endian u32,
//! then `height * width * dim` little-endian f32 values, pixel-major.

use std::path::Path;

use super::map::{FeatureMap, Provenance};
use crate::error::{Error, Result};

pub const FEATURE_FILE_MAGIC: [u8; 4] = *b"NFEA";
const HEADER_LEN: usize = 16;

pub fn write_feature_file(path: &Path, fm: &FeatureMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + fm.as_slice().len() * 4);
    bytes.extend_from_slice(&FEATURE_FILE_MAGIC);
    for v in [fm.height(), fm.width(), fm.dim()] {
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in fm.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || bytes[..4] != FEATURE_FILE_MAGIC {
        return Err(Error::format(path, "not a feature file (bad magic)"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, d) = (field(0), field(1), field(2));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "feature dimensions overflow"))?;
    if bytes.len() - HEADER_LEN != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} payload bytes for {h}x{w}x{d}, found {}", bytes.len() - HEADER_LEN),
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMap::from_vec(w, h, d, data, Provenance::ExternalFile).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let data: Vec<f32> = (0..2 * 3 * 4).map(|i| i as f32 * 0.25 - 1.0).collect();
        let fm = FeatureMap::from_vec(3, 2, 4, data, Provenance::StandIn).unwrap();
        write_feature_file(&path, &fm).unwrap();
        let back = read_feature_file(&path).unwrap();
        assert_eq!(back.as_slice(), fm.as_slice());
        assert_eq!((back.width(), back.height(), back.dim()), (3, 2, 4));
        assert_eq!(back.provenance(), Provenance::ExternalFile);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let fm = FeatureMap::zeros(2, 2, 2, Provenance::StandIn);
        write_feature_file(&path, &fm).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        let err = read_feature_file(&path).unwrap_err().to_string();
        assert!(err.contains("f.bin"));
    }
}
