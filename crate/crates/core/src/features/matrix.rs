use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Which feature blocks an extractor emits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    #[default]
    #[serde(rename = "lfbe")]
    LfbeOnly,
    #[serde(rename = "lfbe+eng")]
    LfbePlusEngineered,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::LfbeOnly => "lfbe",
            FeatureMode::LfbePlusEngineered => "lfbe+eng",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lfbe" => Ok(FeatureMode::LfbeOnly),
            "lfbe+eng" | "lfbe+engineered" => Ok(FeatureMode::LfbePlusEngineered),
            _ => Err(FeatureError::InvalidConfig(format!(
                "unknown feature mode {s:?} (expected lfbe or lfbe+eng)"
            ))),
        }
    }
}

/// Names of the six engineered columns, in order.
pub const ENGINEERED_BLOCKS: [&str; 6] = [
    "srh",
    "hfe_ratio",
    "hfe_entropy",
    "acmax_peak",
    "acmax_pos",
    "acmax_meandist",
];

/// Ordered named column blocks, e.g. `lfbe:64,srh:1,...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureLayout {
    blocks: Vec<(String, usize)>,
}

impl FeatureLayout {
    pub fn for_mode(mode: FeatureMode, num_filters: usize) -> Self {
        let mut blocks = vec![("lfbe".to_string(), num_filters)];
        if mode == FeatureMode::LfbePlusEngineered {
            blocks.extend(ENGINEERED_BLOCKS.iter().map(|n| (n.to_string(), 1)));
        }
        FeatureLayout { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(_, n)| n).sum()
    }

    /// Width of the leading LFBE block (0 if absent).
    pub fn lfbe_dim(&self) -> usize {
        match self.blocks.first() {
            Some((name, n)) if name == "lfbe" => *n,
            _ => 0,
        }
    }

    pub fn blocks(&self) -> &[(String, usize)] {
        &self.blocks
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().map(|(n, d)| format!("{n}:{d}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for FeatureLayout {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FeatureError::InvalidLayout(s.to_string());
        let blocks = s
            .split(',')
            .map(|part| {
                let (name, n) = part.split_once(':').ok_or_else(bad)?;
                let n: usize = n.parse().map_err(|_| bad())?;
                if name.is_empty() || n == 0 {
                    return Err(bad());
                }
                Ok((name.to_string(), n))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureLayout { blocks })
    }
}

/// Time-major per-frame feature vectors for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    dim: usize,
    pub utterance_id: String,
    pub layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn from_rows(utterance_id: impl Into<String>, layout: FeatureLayout, rows: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        let dim = layout.dim();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(FeatureError::DimMismatch {
                    expected: dim,
                    found: r.len(),
                    context: format!("row {i}"),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(utterance_id, layout, values)
    }

    pub fn from_flat(utterance_id: impl Into<String>, layout: FeatureLayout, values: Vec<f64>) -> Result<Self, FeatureError> {
        let dim = layout.dim();
        let utterance_id = utterance_id.into();
        if dim == 0 || values.len() % dim != 0 {
            return Err(FeatureError::DimMismatch {
                expected: dim,
                found: values.len(),
                context: "flat value count".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                utterance_id,
                frame: i / dim,
                column: i % dim,
            });
        }
        Ok(FeatureMatrix {
            values,
            dim,
            utterance_id,
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reverses frame order; used to probe order (in)sensitivity of models.
    pub fn reversed(&self) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = self.rows().rev().map(<[f64]>::to_vec).collect();
        FeatureMatrix::from_rows(self.utterance_id.clone(), self.layout.clone(), rows)
            .expect("same layout")
    }

    /// Applies `(x - mean) / std` column-wise in place.
    pub fn standardize(&mut self, mean: &[f64], std: &[f64]) {
        for row in self.values.chunks_exact_mut(self.dim) {
            for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_strings() {
        let l = FeatureLayout::for_mode(FeatureMode::LfbePlusEngineered, 64);
        assert_eq!(l.dim(), 70);
        assert_eq!(
            l.to_string(),
            "lfbe:64,srh:1,hfe_ratio:1,hfe_entropy:1,acmax_peak:1,acmax_pos:1,acmax_meandist:1"
        );
        assert_eq!(l.to_string().parse::<FeatureLayout>().unwrap(), l);
        assert_eq!(FeatureLayout::for_mode(FeatureMode::LfbeOnly, 64).dim(), 64);
        assert!("lfbe".parse::<FeatureLayout>().is_err());
        assert!("lfbe:0".parse::<FeatureLayout>().is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let l = FeatureLayout::for_mode(FeatureMode::LfbeOnly, 2);
        let r = FeatureMatrix::from_rows("u", l, vec![vec![0.0, f64::NAN]]);
        assert!(matches!(r, Err(FeatureError::NonFinite { frame: 0, column: 1, .. })));
    }
}
