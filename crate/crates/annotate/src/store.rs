use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use traum_core::dataset::{append_record, PairDataset, PairRecord};

use crate::error::{AnnotateError, Result};

/// Append-only JSONL pair store with an in-memory index of labeled clips.
#[derive(Debug)]
pub struct PairStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    labeled: HashSet<String>,
    records: Vec<PairRecord>,
}

impl PairStore {
    /// Opens `path`, loading any records it already holds.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut inner = Inner::default();
        if path.exists() {
            for r in PairDataset::read(&path)?.records {
                inner.labeled.insert(r.clip_id.clone());
                inner.records.push(r);
            }
        }
        Ok(PairStore {
            path,
            inner: Mutex::new(inner),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_labeled(&self, clip_id: &str) -> bool {
        self.inner.lock().unwrap().labeled.contains(clip_id)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists one record; a clip can be labeled only once.
    pub fn append(&self, record: PairRecord) -> Result<PairRecord> {
        let mut inner = self.inner.lock().unwrap();
        if inner.labeled.contains(&record.clip_id) {
            return Err(AnnotateError::ClipAlreadyLabeled(record.clip_id));
        }
        append_record(&self.path, &record)?;
        inner.labeled.insert(record.clip_id.clone());
        inner.records.push(record.clone());
        Ok(record)
    }

    pub fn dataset(&self) -> PairDataset {
        PairDataset {
            records: self.inner.lock().unwrap().records.clone(),
        }
    }

    /// JSONL export of everything recorded so far.
    pub fn export(&self) -> Result<String> {
        Ok(self.dataset().to_jsonl()?)
    }
}
