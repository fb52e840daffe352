use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::cache::CacheError;
use super::SampleId;
use crate::gateway::TextLabel;

fn io_err(path: &Path, source: std::io::Error) -> CacheError {
    CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Classifier answers keyed by `(sample id, prompt hash)`, persisted as one
/// JSON [`TextLabel`] per line.
#[derive(Debug, Default)]
pub struct LabelCache {
    path: Option<PathBuf>,
    labels: Vec<TextLabel>,
    index: HashMap<(SampleId, String), usize>,
    dirty: bool,
}

impl LabelCache {
    /// Opens the cache at `path`; a missing file yields an empty cache.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let mut cache = LabelCache {
            path: Some(path.to_path_buf()),
            ..Default::default()
        };
        if !path.exists() {
            return Ok(cache);
        }
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        file.lock_shared().map_err(|e| io_err(path, e))?;
        let mut offset = 0u64;
        for line in BufReader::new(&file).lines() {
            let line = line.map_err(|e| io_err(path, e))?;
            let len = line.len() as u64 + 1;
            if !line.trim().is_empty() {
                let label: TextLabel = serde_json::from_str(&line).map_err(|e| CacheError::CorruptCache {
                    offset,
                    reason: e.to_string(),
                })?;
                cache.insert_clean(label);
            }
            offset += len;
        }
        Ok(cache)
    }

    pub fn in_memory() -> Self {
        Self::default()
    }

    fn insert_clean(&mut self, label: TextLabel) {
        let key = (label.sample_id.clone(), label.prompt_hash.clone());
        match self.index.get(&key) {
            Some(&i) => self.labels[i] = label,
            None => {
                self.index.insert(key, self.labels.len());
                self.labels.push(label);
            }
        }
    }

    pub fn get(&self, sample_id: &SampleId, prompt_hash: &str) -> Option<&TextLabel> {
        self.index
            .get(&(sample_id.clone(), prompt_hash.to_owned()))
            .map(|&i| &self.labels[i])
    }

    pub fn insert(&mut self, label: TextLabel) {
        self.insert_clean(label);
        self.dirty = true;
    }

    pub fn labels(&self) -> &[TextLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn save(&mut self) -> Result<(), CacheError> {
        let (Some(path), true) = (&self.path, self.dirty) else {
            return Ok(());
        };
        let io = |e| io_err(path, e);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).write(true).truncate(false).open(path).map_err(io)?;
        file.lock().map_err(io)?;
        file.set_len(0).map_err(io)?;
        let mut w = BufWriter::new(&file);
        for label in &self.labels {
            serde_json::to_writer(&mut w, label).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)?;
        drop(w);
        file.unlock().map_err(io)?;
        self.dirty = false;
        Ok(())
    }
}
