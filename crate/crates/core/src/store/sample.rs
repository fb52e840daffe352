use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::{self, ClassFrom, IngestOptions, TableFormat};
use super::IngestError;
use crate::hashing::short_hash;

/// Content-derived sample identity: hex of the first 16 bytes of the
/// SHA-256 of the payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(String);

impl SampleId {
    pub fn from_payload(bytes: &[u8]) -> Self {
        SampleId(short_hash(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        SampleId(s.to_owned())
    }
}

impl From<String> for SampleId {
    fn from(s: String) -> Self {
        SampleId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Encoded file content (PNG or JPEG).
    Image(Vec<u8>),
    Text(String),
}

impl Payload {
    pub fn bytes(&self) -> &[u8] {
        match self {
            Payload::Image(b) => b,
            Payload::Text(s) => s.as_bytes(),
        }
    }

    pub fn modality(&self) -> Modality {
        match self {
            Payload::Image(_) => Modality::Image,
            Payload::Text(_) => Modality::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub payload: Payload,
    pub truth_label: Option<String>,
    /// Relative path or 1-based row number the sample came from.
    pub origin: String,
}

impl Sample {
    /// Builds a sample, deriving its id from the payload bytes.
    pub fn new(payload: Payload, truth_label: Option<String>, origin: impl Into<String>) -> Self {
        Sample {
            id: SampleId::from_payload(payload.bytes()),
            payload,
            truth_label,
            origin: origin.into(),
        }
    }

    pub fn modality(&self) -> Modality {
        self.payload.modality()
    }
}

/// How a manifest's samples were produced, so a dataset can be reloaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    ImageDir {
        class_from: ClassFrom,
    },
    Table {
        format: TableFormat,
        text_field: String,
        label_field: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub modality: Modality,
    /// Ingestion order; never re-sorted.
    pub samples: Vec<SampleId>,
    pub source_path: String,
    pub source: SourceSpec,
    pub lenient: bool,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// A manifest together with the loaded samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
    /// Files or rows skipped in lenient mode.
    pub warnings: Vec<String>,
    index: HashMap<SampleId, usize>,
}

impl Dataset {
    pub(crate) fn new(manifest: DatasetManifest, samples: Vec<Sample>, warnings: Vec<String>) -> Self {
        let index = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        Dataset {
            manifest,
            samples,
            warnings,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &SampleId) -> Option<&Sample> {
        self.index.get(id).map(|&i| &self.samples[i])
    }

    pub fn position(&self, id: &SampleId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &SampleId> {
        self.samples.iter().map(|s| &s.id)
    }

    pub fn truth_labels(&self) -> Vec<Option<String>> {
        self.samples.iter().map(|s| s.truth_label.clone()).collect()
    }

    /// Re-ingests the manifest's source and checks that ids and order are unchanged.
    pub fn reload(manifest: &DatasetManifest) -> Result<Dataset, IngestError> {
        let opts = IngestOptions {
            lenient: manifest.lenient,
            name: Some(manifest.name.clone()),
        };
        let path = Path::new(&manifest.source_path);
        let dataset = match &manifest.source {
            SourceSpec::ImageDir { class_from } => ingest::load_image_dir(path, *class_from, &opts)?,
            SourceSpec::Table {
                format,
                text_field,
                label_field,
            } => ingest::load_text_table(path, *format, text_field, label_field.as_deref(), &opts)?,
        };
        if dataset.manifest.samples != manifest.samples {
            return Err(IngestError::ManifestDrift(format!(
                "{} samples on disk, {} in manifest",
                dataset.len(),
                manifest.samples.len()
            )));
        }
        Ok(Dataset::new(manifest.clone(), dataset.samples, dataset.warnings))
    }
}
