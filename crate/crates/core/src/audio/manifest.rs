use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{decode_wav, AudioError, AudioUtterance, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(rename = "cv")]
    CrossValidation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::CrossValidation => "cv",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub audio_path: String,
    pub utterance_id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub device_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub split: Split,
    /// Directory relative audio paths are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    audio_path: String,
    utterance_id: String,
    speaker_id: String,
    #[serde(default)]
    device_id: Option<String>,
    label: String,
}

/// Parses a JSON-lines manifest. Blank lines are skipped; labels are
/// case-insensitive.
pub fn load_manifest(path: &Path, split: Split) -> Result<DatasetManifest, AudioError> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| AudioError::Parse {
            path: display.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        let label: Label = raw.label.parse().map_err(|label| AudioError::UnknownLabel {
            path: display.clone(),
            line: line_no,
            label,
        })?;
        if !seen.insert(raw.utterance_id.clone()) {
            return Err(AudioError::DuplicateUtteranceId {
                path: display.clone(),
                line: line_no,
                utterance_id: raw.utterance_id,
            });
        }
        entries.push(ManifestEntry {
            audio_path: raw.audio_path,
            utterance_id: raw.utterance_id,
            speaker_id: raw.speaker_id,
            device_id: raw.device_id.unwrap_or_default(),
            label,
        });
    }
    Ok(DatasetManifest {
        entries,
        split,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), AudioError> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

impl DatasetManifest {
    pub fn audio_path(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Decodes one entry's audio and attaches its manifest metadata.
    pub fn load_utterance(&self, entry: &ManifestEntry) -> Result<AudioUtterance, AudioError> {
        let mut u = decode_wav(&self.audio_path(entry))?;
        u.utterance_id = entry.utterance_id.clone();
        u.speaker_id = entry.speaker_id.clone();
        u.device_id = entry.device_id.clone();
        u.label = Some(entry.label);
        Ok(u)
    }

    pub fn speakers(&self) -> HashSet<&str> {
        self.entries.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    /// True when no speaker appears in both manifests.
    pub fn speaker_disjoint(&self, other: &DatasetManifest) -> bool {
        self.speakers().is_disjoint(&other.speakers())
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }
}
