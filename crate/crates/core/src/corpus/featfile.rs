//! Binary feature files: an 8-byte magic, a little-endian `u32` version,
//! `u64` frame count and `u32` column count, then row-major `f64` values.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"EMOSIDFT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4;

/// Dense row-major frames x columns matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: usize,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(columns: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != columns) {
            return Err(Error::DimensionMismatch {
                expected: columns,
                found: bad.len(),
            });
        }
        Ok(FeatureMatrix { columns, rows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.columns * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.columns as u32).to_le_bytes());
        for v in self.rows.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(Error::format(path, "not a feature file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported feature file version {version}")));
        }
        let frames = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let columns = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        let expected = frames
            .checked_mul(columns)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(path, "header overflow"))?;
        if body.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} data bytes for {frames}x{columns}, found {}", body.len()),
            ));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = if columns == 0 {
            vec![Vec::new(); frames]
        } else {
            values.chunks(columns).map(<[f64]>::to_vec).collect()
        };
        Ok(FeatureMatrix { columns, rows })
    }
}

pub fn write_feature_file(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes, path)
}
