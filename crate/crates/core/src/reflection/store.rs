//! Durable guideline storage.
//!
//! Each guideline lives in its own JSON file together with a checksum of
//! its text. Loading verifies the checksum, and "latest" means highest
//! iteration, breaking ties by creation timestamp.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{text_checksum, Guideline, ReflectError};

#[derive(Debug, Serialize, Deserialize)]
struct StoredGuideline {
    #[serde(flatten)]
    guideline: Guideline,
    checksum: String,
}

/// Directory-backed store of guidelines.
pub struct GuidelineStore {
    dir: PathBuf,
}

impl GuidelineStore {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    /// Writes the guideline and returns its file path.
    pub fn save(&self, guideline: &Guideline) -> Result<PathBuf, ReflectError> {
        let checksum = text_checksum(&guideline.text);
        let stored = StoredGuideline {
            guideline: guideline.clone(),
            checksum: checksum.clone(),
        };
        let path = self
            .dir
            .join(format!("iter{:03}_{}.json", guideline.iteration, &checksum[..8]));
        let json = serde_json::to_string_pretty(&stored).expect("guideline serialization");
        std::fs::write(&path, json)?;
        Ok(path)
    }

    /// Reads and verifies a guideline file outside any store directory.
    pub fn load_file(path: &Path) -> Result<Guideline, ReflectError> {
        let text = std::fs::read_to_string(path)?;
        let stored: StoredGuideline = serde_json::from_str(&text)
            .map_err(|_| ReflectError::CorruptStore(path.display().to_string()))?;
        if text_checksum(&stored.guideline.text) != stored.checksum {
            return Err(ReflectError::CorruptStore(path.display().to_string()));
        }
        Ok(stored.guideline)
    }

    pub fn load(&self, path: &Path) -> Result<Guideline, ReflectError> {
        Self::load_file(path)
    }

    /// Every stored guideline, ordered by iteration then creation time.
    pub fn list(&self) -> Result<Vec<Guideline>, ReflectError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                out.push(self.load(&path)?);
            }
        }
        out.sort_by(|a, b| {
            a.iteration
                .cmp(&b.iteration)
                .then_with(|| a.created_at.cmp(&b.created_at))
        });
        Ok(out)
    }

    pub fn latest(&self) -> Result<Guideline, ReflectError> {
        self.list()?.pop().ok_or(ReflectError::NotFound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn guideline(iteration: u32, text: &str, created_at: &str) -> Guideline {
        Guideline {
            text: text.into(),
            iteration,
            sources: Vec::new(),
            reflector_model: "reflector".into(),
            created_at: created_at.into(),
            word_count: text.split_whitespace().count(),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = GuidelineStore::new(dir.path()).unwrap();
        let g = guideline(1, "prefer clearing goal blocks", "2026-01-01T00:00:00+00:00");
        let path = store.save(&g).unwrap();
        assert_eq!(store.load(&path).unwrap(), g);
    }

    #[test]
    fn latest_prefers_iteration_then_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let store = GuidelineStore::new(dir.path()).unwrap();
        store
            .save(&guideline(2, "newer round", "2026-01-01T00:00:00+00:00"))
            .unwrap();
        store
            .save(&guideline(1, "older round", "2026-02-01T00:00:00+00:00"))
            .unwrap();
        store
            .save(&guideline(2, "same round, later", "2026-01-02T00:00:00+00:00"))
            .unwrap();
        assert_eq!(store.latest().unwrap().text, "same round, later");
    }

    #[test]
    fn tampered_files_fail_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let store = GuidelineStore::new(dir.path()).unwrap();
        let path = store
            .save(&guideline(1, "original", "2026-01-01T00:00:00+00:00"))
            .unwrap();
        let edited = std::fs::read_to_string(&path)
            .unwrap()
            .replace("original", "tampered");
        std::fs::write(&path, edited).unwrap();
        assert!(matches!(store.load(&path), Err(ReflectError::CorruptStore(_))));
    }

    #[test]
    fn empty_store_reports_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = GuidelineStore::new(dir.path()).unwrap();
        assert!(matches!(store.latest(), Err(ReflectError::NotFound)));
    }
}
