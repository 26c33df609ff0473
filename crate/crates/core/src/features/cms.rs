use std::collections::BTreeMap;

use super::{FeatureError, FeatureMatrix};

/// Channel grouping for mean subtraction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub speaker_id: String,
    pub device_id: String,
}

impl GroupKey {
    pub fn new(speaker_id: impl Into<String>, device_id: impl Into<String>) -> Self {
        GroupKey {
            speaker_id: speaker_id.into(),
            device_id: device_id.into(),
        }
    }
}

/// Subtracts, per (speaker, device) group, the mean of each LFBE column over
/// every frame of every utterance in the group. Engineered columns are left
/// untouched. All group sums are reduced before any matrix is modified.
pub fn channel_mean_subtract(mats: &mut [FeatureMatrix], keys: &[GroupKey]) -> Result<(), FeatureError> {
    assert_eq!(mats.len(), keys.len(), "one group key per matrix");
    let mut sums: BTreeMap<&GroupKey, (Vec<f64>, usize)> = BTreeMap::new();
    for (m, k) in mats.iter().zip(keys) {
        let lfbe = m.layout.lfbe_dim();
        let entry = sums.entry(k).or_insert_with(|| (vec![0.0; lfbe], 0));
        if entry.0.len() != lfbe {
            return Err(FeatureError::DimMismatch {
                expected: entry.0.len(),
                found: lfbe,
                context: format!("LFBE width of {}", m.utterance_id),
            });
        }
        for row in m.rows() {
            for (s, v) in entry.0.iter_mut().zip(row) {
                *s += v;
            }
        }
        entry.1 += m.num_frames();
    }

    let mut means: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for (k, (sum, count)) in sums {
        if count == 0 {
            return Err(FeatureError::EmptyGroup {
                speaker_id: k.speaker_id.clone(),
                device_id: k.device_id.clone(),
            });
        }
        means.insert(k.clone(), sum.into_iter().map(|s| s / count as f64).collect());
    }

    for (m, k) in mats.iter_mut().zip(keys) {
        let mean = &means[k];
        for t in 0..m.num_frames() {
            for (v, mu) in m.row_mut(t).iter_mut().zip(mean) {
                *v -= mu;
            }
        }
    }
    Ok(())
}
