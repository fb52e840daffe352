//! Dataset ingestion and on-disk persistence.
//!
//! Samples get content-derived identities so that caches of embeddings and
//! labels stay valid across re-ingestion of the same files.

pub(crate) mod cache;
mod ingest;
mod labels;
mod sample;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use cache::{
    read_cache, write_cache, CacheError, CacheHeader, CacheKey, EmbeddingCache, EmbeddingKind,
    EmbeddingRecord, CACHE_MAGIC, CACHE_VERSION,
};
pub use labels::LabelCache;
pub use ingest::{load_image_dir, load_text_table, ClassFrom, IngestOptions, TableFormat};
pub use sample::{Dataset, DatasetManifest, Modality, Payload, Sample, SampleId, SourceSpec};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot decode image {0}")]
    UndecodableImage(PathBuf),
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: String },
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("row {0}: empty payload")]
    EmptyPayload(usize),
    #[error("duplicate sample {id} at {location}")]
    DuplicateSample { id: SampleId, location: String },
    #[error("manifest no longer matches its source: {0}")]
    ManifestDrift(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Writes `value` as pretty JSON, replacing any existing file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = File::create(path)?;
    file.lock()?;
    let mut w = BufWriter::new(&file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    drop(w);
    file.unlock()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let file = File::open(path)?;
    file.lock_shared()?;
    let value = serde_json::from_reader(BufReader::new(&file))?;
    file.unlock()?;
    Ok(value)
}
