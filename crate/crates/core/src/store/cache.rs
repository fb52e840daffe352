//! JSONL embedding cache.
//!
//! Line 1 is a header `{"magic":"SPJ1","version":1,"model_tag":..,"dim":..}`;
//! every following line is one [`EmbeddingRecord`] whose vector is stored as
//! base64 of little-endian `f32`s, so a round trip is bit-exact.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SampleId;

pub const CACHE_MAGIC: &str = "SPJ1";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("duplicate cache key {0}")]
    DuplicateKey(String),
    #[error("corrupt cache at byte offset {offset}: {reason}")]
    CorruptCache { offset: u64, reason: String },
    #[error("unsupported cache header: {0}")]
    VersionMismatch(String),
    #[error("record {sample_id}: dimension {got} does not match {expected}")]
    DimMismatch {
        sample_id: SampleId,
        expected: usize,
        got: usize,
    },
    #[error("record {0}: non-finite component")]
    NonFinite(SampleId),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Data,
    Label,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: SampleId,
    pub kind: EmbeddingKind,
    pub model_tag: String,
    pub vector: Vec<f32>,
    /// Set for label records (and fused records derived from them).
    pub prompt_hash: Option<String>,
    /// Fusion weight, set for fused records.
    pub alpha: Option<f64>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn key(&self) -> CacheKey {
        CacheKey {
            sample_id: self.sample_id.clone(),
            kind: self.kind,
            model_tag: self.model_tag.clone(),
            prompt_hash: self.prompt_hash.clone(),
            alpha_bits: self.alpha.map(f64::to_bits),
        }
    }

    fn check_finite(&self) -> Result<(), CacheError> {
        if self.vector.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CacheError::NonFinite(self.sample_id.clone()))
        }
    }
}

/// Identity of a record within one cache file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub sample_id: SampleId,
    pub kind: EmbeddingKind,
    pub model_tag: String,
    pub prompt_hash: Option<String>,
    pub alpha_bits: Option<u64>,
}

impl CacheKey {
    pub fn data(sample_id: &SampleId, model_tag: &str) -> Self {
        CacheKey {
            sample_id: sample_id.clone(),
            kind: EmbeddingKind::Data,
            model_tag: model_tag.to_owned(),
            prompt_hash: None,
            alpha_bits: None,
        }
    }

    pub fn label(sample_id: &SampleId, model_tag: &str, prompt_hash: &str) -> Self {
        CacheKey {
            sample_id: sample_id.clone(),
            kind: EmbeddingKind::Label,
            model_tag: model_tag.to_owned(),
            prompt_hash: Some(prompt_hash.to_owned()),
            alpha_bits: None,
        }
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {:?}, {}", self.sample_id, self.kind, self.model_tag)?;
        if let Some(h) = &self.prompt_hash {
            write!(f, ", {h}")?;
        }
        if let Some(a) = self.alpha_bits {
            write!(f, ", alpha={}", f64::from_bits(a))?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub magic: String,
    pub version: u32,
    pub model_tag: String,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    sample_id: SampleId,
    kind: EmbeddingKind,
    model_tag: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    vec_b64: String,
}

pub(crate) fn encode_f32(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub(crate) fn decode_f32(s: &str) -> Option<Vec<f32>> {
    let bytes = B64.decode(s).ok()?;
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    )
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `records` to `path`, holding an exclusive lock on the file.
///
/// All records must share one dimension; the header's `model_tag` is taken
/// from the first record.
pub fn write_cache(records: &[EmbeddingRecord], path: &Path) -> Result<(), CacheError> {
    let dim = records.first().map_or(0, EmbeddingRecord::dim);
    let mut keys = HashSet::with_capacity(records.len());
    for r in records {
        if r.dim() != dim {
            return Err(CacheError::DimMismatch {
                sample_id: r.sample_id.clone(),
                expected: dim,
                got: r.dim(),
            });
        }
        r.check_finite()?;
        let key = r.key();
        if !keys.insert(key.clone()) {
            return Err(CacheError::DuplicateKey(key.to_string()));
        }
    }

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(path)
        .map_err(io_err(path))?;
    file.lock().map_err(io_err(path))?;
    file.set_len(0).map_err(io_err(path))?;

    let header = CacheHeader {
        magic: CACHE_MAGIC.to_owned(),
        version: CACHE_VERSION,
        model_tag: records.first().map(|r| r.model_tag.clone()).unwrap_or_default(),
        dim,
    };
    let mut w = BufWriter::new(&file);
    let write = |w: &mut BufWriter<&File>, line: String| -> std::io::Result<()> {
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")
    };
    write(&mut w, serde_json::to_string(&header).expect("header serializes")).map_err(io_err(path))?;
    for r in records {
        let line = RecordLine {
            sample_id: r.sample_id.clone(),
            kind: r.kind,
            model_tag: r.model_tag.clone(),
            dim: r.dim(),
            prompt_hash: r.prompt_hash.clone(),
            alpha: r.alpha,
            vec_b64: encode_f32(&r.vector),
        };
        write(&mut w, serde_json::to_string(&line).expect("record serializes")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    drop(w);
    file.sync_all().map_err(io_err(path))?;
    file.unlock().map_err(io_err(path))?;
    Ok(())
}

/// Reads a cache file written by [`write_cache`].
pub fn read_cache(path: &Path) -> Result<Vec<EmbeddingRecord>, CacheError> {
    Ok(read_cache_with_header(path)?.1)
}

pub fn read_cache_with_header(path: &Path) -> Result<(CacheHeader, Vec<EmbeddingRecord>), CacheError> {
    let file = File::open(path).map_err(io_err(path))?;
    file.lock_shared().map_err(io_err(path))?;
    let result = parse_cache(BufReader::new(&file), path);
    let _ = file.unlock();
    result
}

fn parse_cache<R: BufRead>(mut reader: R, path: &Path) -> Result<(CacheHeader, Vec<EmbeddingRecord>), CacheError> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(io_err(path))?;
    if n == 0 {
        return Err(CacheError::CorruptCache {
            offset: 0,
            reason: "empty file".into(),
        });
    }
    let header: CacheHeader = serde_json::from_str(line.trim_end())
        .map_err(|_| CacheError::VersionMismatch(line.trim_end().chars().take(80).collect()))?;
    if header.magic != CACHE_MAGIC || header.version != CACHE_VERSION {
        return Err(CacheError::VersionMismatch(format!(
            "magic {:?} version {}",
            header.magic, header.version
        )));
    }

    let mut offset = n as u64;
    let mut records = Vec::new();
    let mut keys = HashSet::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        let text = line.trim_end();
        if !text.is_empty() {
            let corrupt = |reason: String| CacheError::CorruptCache { offset, reason };
            let rec: RecordLine = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
            let vector = decode_f32(&rec.vec_b64).ok_or_else(|| corrupt("bad vec_b64".into()))?;
            if vector.len() != rec.dim || rec.dim != header.dim {
                return Err(corrupt(format!(
                    "dim field {} header {} payload {}",
                    rec.dim,
                    header.dim,
                    vector.len()
                )));
            }
            let record = EmbeddingRecord {
                sample_id: rec.sample_id,
                kind: rec.kind,
                model_tag: rec.model_tag,
                vector,
                prompt_hash: rec.prompt_hash,
                alpha: rec.alpha,
            };
            if record.check_finite().is_err() {
                return Err(corrupt("non-finite component".into()));
            }
            let key = record.key();
            if !keys.insert(key.clone()) {
                return Err(CacheError::DuplicateKey(key.to_string()));
            }
            records.push(record);
        }
        offset += n as u64;
    }
    Ok((header, records))
}

/// In-memory view of a cache file, keyed by [`CacheKey`], preserving insertion order.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    records: Vec<EmbeddingRecord>,
    index: HashMap<CacheKey, usize>,
    dirty: bool,
}

impl EmbeddingCache {
    /// Opens the cache at `path`; a missing file yields an empty cache.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let records = if path.exists() { read_cache(path)? } else { Vec::new() };
        let index = records.iter().enumerate().map(|(i, r)| (r.key(), i)).collect();
        Ok(EmbeddingCache {
            path: Some(path.to_path_buf()),
            records,
            index,
            dirty: false,
        })
    }

    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<&EmbeddingRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    /// Inserts or replaces the record with the same key.
    pub fn insert(&mut self, record: EmbeddingRecord) {
        let key = record.key();
        match self.index.get(&key) {
            Some(&i) => self.records[i] = record,
            None => {
                self.index.insert(key, self.records.len());
                self.records.push(record);
            }
        }
        self.dirty = true;
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    /// Persists to the backing file, if any and if anything changed.
    pub fn save(&mut self) -> Result<(), CacheError> {
        if let (Some(path), true) = (&self.path, self.dirty) {
            write_cache(&self.records, path)?;
            self.dirty = false;
        }
        Ok(())
    }
}
