//! Per-utterance binary feature records.
//!
//! Layout (little-endian): magic `WDFT`, version u32, dim u32, num_frames u32,
//! layout string length u32 + UTF-8 bytes, then `num_frames x dim` f32 values
//! in row-major order.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::{FeatureError, FeatureLayout, FeatureMatrix};

const MAGIC: &[u8; 4] = b"WDFT";
pub const FEATURE_FILE_VERSION: u32 = 1;

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let layout = m.layout.to_string();
    let mut out = Vec::with_capacity(20 + layout.len() + 4 * m.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FEATURE_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(m.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(layout.len() as u32).to_le_bytes());
    out.extend_from_slice(layout.as_bytes());
    for &v in m.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], utterance_id: &str) -> Result<FeatureMatrix, FeatureError> {
    let corrupt = |m: &str| FeatureError::CorruptFeatureFile(format!("{utterance_id}: {m}"));
    let mut c = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    c.read_exact(&mut magic).map_err(|_| corrupt("short header"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut word = || -> Result<u32, FeatureError> {
        let mut b = [0u8; 4];
        c.read_exact(&mut b).map_err(|_| corrupt("short header"))?;
        Ok(u32::from_le_bytes(b))
    };
    let version = word()?;
    if version != FEATURE_FILE_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let dim = word()? as usize;
    let frames = word()? as usize;
    let layout_len = word()? as usize;
    let pos = c.position() as usize;
    let layout_bytes = bytes.get(pos..pos + layout_len).ok_or_else(|| corrupt("short layout"))?;
    let layout: FeatureLayout = std::str::from_utf8(layout_bytes)
        .map_err(|_| corrupt("layout is not UTF-8"))?
        .parse()?;
    if layout.dim() != dim {
        return Err(corrupt("layout disagrees with dim"));
    }
    let body = &bytes[pos + layout_len..];
    if body.len() != frames * dim * 4 {
        return Err(corrupt("payload size disagrees with header"));
    }
    let values = body
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    FeatureMatrix::from_flat(utterance_id, layout, values)
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<(), FeatureError> {
    fs::write(path, encode_features(m))?;
    Ok(())
}

pub fn read_features(path: &Path, utterance_id: &str) -> Result<FeatureMatrix, FeatureError> {
    decode_features(&fs::read(path)?, utterance_id)
}
