//! `WDMD` model files.
//!
//! Layout (little-endian): magic `WDMD`, `u32` version, `u8` architecture tag
//! (0 = MLP, 1 = LSTM), `u32` count plus `u32` dims, then length-prefixed
//! UTF-8 strings for the feature layout and the config snapshot, the
//! normalization vectors as `f64`, the operating point as a length-prefixed
//! JSON string (empty when untuned), `u64` parameter count plus `f32`
//! parameters, and a trailing CRC32 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Lstm, Mlp, Model, NeuralError};
use crate::features::{FeatureLayout, FeatureMatrix};
use crate::metrics::OperatingPoint;

pub const MODEL_FILE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"WDMD";
const TAG_MLP: u8 = 0;
const TAG_LSTM: u8 = 1;

/// Per-dimension standardization applied to features before the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Standard deviations below this are treated as constant columns and
    /// left unscaled.
    pub const MIN_STD: f64 = 1e-8;

    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation over every frame of `mats`.
    pub fn fit(mats: &[&FeatureMatrix]) -> Result<Self, NeuralError> {
        let dim = mats.first().map(|m| m.dim()).ok_or(NeuralError::EmptyTrainingSet)?;
        let mut sum = vec![0.0; dim];
        let mut n = 0usize;
        for m in mats {
            if m.dim() != dim {
                return Err(NeuralError::DimMismatch { expected: dim, found: m.dim() });
            }
            for row in m.rows() {
                sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
            n += m.num_frames();
        }
        if n == 0 {
            return Err(NeuralError::EmptyTrainingSet);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for m in mats {
            for row in m.rows() {
                for ((acc, v), mu) in sq.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < Self::MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Normalization { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &mut FeatureMatrix) -> Result<(), NeuralError> {
        if m.dim() != self.dim() {
            return Err(NeuralError::DimMismatch {
                expected: self.dim(),
                found: m.dim(),
            });
        }
        m.standardize(&self.mean, &self.std);
        Ok(())
    }
}

/// Everything needed to score features: weights, expected feature layout,
/// normalization and (once tuned) the operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub layout: FeatureLayout,
    pub normalization: Normalization,
    pub operating_point: Option<OperatingPoint>,
    /// JSON snapshot of the configuration the model was trained with.
    pub config_snapshot: String,
}

impl ModelFile {
    /// Bundles a model for saving. Weights are rounded to `f32` here so the
    /// in-memory model scores exactly like one loaded back from disk.
    pub fn new(mut model: Model, layout: FeatureLayout, normalization: Normalization, config_snapshot: String) -> Result<Self, NeuralError> {
        if layout.dim() != model.input_dim() {
            return Err(NeuralError::DimMismatch {
                expected: model.input_dim(),
                found: layout.dim(),
            });
        }
        if normalization.dim() != layout.dim() || normalization.std.len() != layout.dim() {
            return Err(NeuralError::DimMismatch {
                expected: layout.dim(),
                found: normalization.dim(),
            });
        }
        model.params_mut().iter_mut().for_each(|p| *p = *p as f32 as f64);
        Ok(ModelFile {
            model,
            layout,
            normalization,
            operating_point: None,
            config_snapshot,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FILE_VERSION.to_le_bytes());
        let (tag, dims): (u8, Vec<usize>) = match &self.model {
            Model::Mlp(m) => (TAG_MLP, m.dims().to_vec()),
            Model::Lstm(m) => (TAG_LSTM, vec![m.input_dim(), m.hidden(), m.layers()]),
        };
        out.push(tag);
        put_u32(&mut out, dims.len() as u32);
        for d in dims {
            put_u32(&mut out, d as u32);
        }
        put_str(&mut out, &self.layout.to_string());
        put_str(&mut out, &self.config_snapshot);
        put_u32(&mut out, self.normalization.dim() as u32);
        for v in self.normalization.mean.iter().chain(&self.normalization.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let op = self
            .operating_point
            .as_ref()
            .map(|op| serde_json::to_string(op).expect("operating point serializes"))
            .unwrap_or_default();
        put_str(&mut out, &op);
        let params = self.model.params();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let corrupt = |m: &str| NeuralError::CorruptFile(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing WDMD magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != MODEL_FILE_VERSION {
            return Err(NeuralError::VersionMismatch {
                expected: MODEL_FILE_VERSION,
                found: version,
            });
        }
        let tag = r.take(1)?[0];
        let ndims = r.u32()? as usize;
        if ndims > 16 {
            return Err(corrupt("implausible dimension count"));
        }
        let dims = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let layout: FeatureLayout = r.string()?.parse().map_err(|_| corrupt("bad feature layout"))?;
        let config_snapshot = r.string()?;
        let ndim = r.u32()? as usize;
        let mut norm = Vec::with_capacity(2 * ndim);
        for _ in 0..2 * ndim {
            norm.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let std = norm.split_off(ndim);
        let normalization = Normalization { mean: norm, std };
        let op = r.string()?;
        let operating_point = if op.is_empty() {
            None
        } else {
            Some(serde_json::from_str(&op).map_err(|e| corrupt(&format!("bad operating point: {e}")))?)
        };
        let nparams = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        if nparams.checked_mul(4) != Some(body.len() - r.pos) {
            return Err(corrupt("parameter count does not match file length"));
        }
        let params: Vec<f64> = r
            .take(nparams * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let model = match (tag, dims.as_slice()) {
            (TAG_MLP, _) => Model::Mlp(Mlp::from_params(&dims, params)?),
            (TAG_LSTM, [input, hidden, layers]) => Model::Lstm(Lstm::from_params(*input, *hidden, *layers, params)?),
            _ => return Err(corrupt("unknown architecture")),
        };
        if layout.dim() != model.input_dim() || normalization.dim() != layout.dim() {
            return Err(corrupt("layout, normalization and model dims disagree"));
        }
        Ok(ModelFile {
            model,
            layout,
            normalization,
            operating_point,
            config_snapshot,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NeuralError::CorruptFile("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NeuralError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NeuralError::CorruptFile("invalid UTF-8".into()))
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<(), NeuralError> {
    std::fs::write(path, file.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, NeuralError> {
    ModelFile::from_bytes(&std::fs::read(path)?)
}
