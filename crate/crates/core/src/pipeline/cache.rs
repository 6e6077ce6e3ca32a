//! Content-addressed store of per-image counts, one JSON file per key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ConfusionCounts;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    per_image: Vec<(String, ConfusionCounts)>,
}

pub(crate) struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub(crate) fn new(dir: PathBuf, enabled: bool) -> Self {
        Self {
            dir: enabled.then_some(dir),
        }
    }

    fn path(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.json"))
    }

    pub(crate) fn get(&self, key: &str) -> Option<Vec<(String, ConfusionCounts)>> {
        let path = Self::path(self.dir.as_ref()?, key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if entry.key == key => Some(entry.per_image),
            _ => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    /// Writes through a temporary file so an interrupted run never leaves a
    /// truncated entry behind.
    pub(crate) fn put(&self, key: &str, per_image: &[(String, ConfusionCounts)]) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let entry = Entry {
            key: key.to_string(),
            per_image: per_image.to_vec(),
        };
        let bytes = serde_json::to_vec(&entry).expect("cache entry serializes");
        let tmp = dir.join(format!("{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        let path = Self::path(dir, key);
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
