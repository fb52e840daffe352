use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use image::ImageFormat;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::sample::{Dataset, DatasetManifest, Modality, Payload, Sample, SourceSpec};
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClassFrom {
    /// Truth label is the name of the file's parent directory.
    #[default]
    Subdir,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Jsonl,
}

impl TableFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "jsonl" | "ndjson" => Some(TableFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Skip bad inputs with a warning instead of failing.
    pub lenient: bool,
    /// Dataset name; defaults to the source's file or directory name.
    pub name: Option<String>,
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn default_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

/// Collects samples, enforcing unique ids. Duplicates are fatal in strict mode.
struct Collector {
    lenient: bool,
    seen: HashSet<super::SampleId>,
    samples: Vec<Sample>,
    warnings: Vec<String>,
}

impl Collector {
    fn new(lenient: bool) -> Self {
        Collector {
            lenient,
            seen: HashSet::new(),
            samples: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn warn_or_fail(&mut self, err: IngestError) -> Result<(), IngestError> {
        if self.lenient {
            log::warn!("skipping: {err}");
            self.warnings.push(err.to_string());
            Ok(())
        } else {
            Err(err)
        }
    }

    fn push(&mut self, sample: Sample) -> Result<(), IngestError> {
        if !self.seen.insert(sample.id.clone()) {
            return self.warn_or_fail(IngestError::DuplicateSample {
                id: sample.id,
                location: sample.origin,
            });
        }
        self.samples.push(sample);
        Ok(())
    }

    fn finish(
        self,
        name: String,
        modality: Modality,
        path: &Path,
        source: SourceSpec,
    ) -> Result<Dataset, IngestError> {
        if self.samples.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let manifest = DatasetManifest {
            name,
            modality,
            samples: self.samples.iter().map(|s| s.id.clone()).collect(),
            source_path: path.to_string_lossy().into_owned(),
            source,
            lenient: self.lenient,
            created_at: now_secs(),
        };
        Ok(Dataset::new(manifest, self.samples, self.warnings))
    }
}

fn is_hidden(entry: &walkdir::DirEntry) -> bool {
    entry.depth() > 0 && entry.file_name().to_string_lossy().starts_with('.')
}

/// Loads every PNG/JPEG under `path`, ordered lexicographically by relative path.
pub fn load_image_dir(
    path: &Path,
    class_from: ClassFrom,
    opts: &IngestOptions,
) -> Result<Dataset, IngestError> {
    if !path.is_dir() {
        return Err(IngestError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(path).into_iter().filter_entry(|e| !is_hidden(e)) {
        let entry = entry.map_err(|e| {
            let p = e.path().unwrap_or(path).to_path_buf();
            IngestError::io(&p, e.into())
        })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(path).unwrap_or(entry.path()).to_path_buf();
            files.push(rel);
        }
    }
    files.sort();

    let mut out = Collector::new(opts.lenient);
    for rel in files {
        let full = path.join(&rel);
        let bytes = std::fs::read(&full).map_err(|e| IngestError::io(&full, e))?;
        if !decodes_as_png_or_jpeg(&bytes) {
            out.warn_or_fail(IngestError::UndecodableImage(full))?;
            continue;
        }
        let truth_label = match class_from {
            ClassFrom::Subdir => rel
                .parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned()),
            ClassFrom::None => None,
        };
        let origin = rel.to_string_lossy().replace('\\', "/");
        out.push(Sample::new(Payload::Image(bytes), truth_label, origin))?;
    }
    let name = opts.name.clone().unwrap_or_else(|| default_name(path));
    out.finish(name, Modality::Image, path, SourceSpec::ImageDir { class_from })
}

fn decodes_as_png_or_jpeg(bytes: &[u8]) -> bool {
    match image::guess_format(bytes) {
        Ok(fmt @ (ImageFormat::Png | ImageFormat::Jpeg)) => {
            image::load_from_memory_with_format(bytes, fmt).is_ok()
        }
        _ => false,
    }
}

fn json_field_as_string(value: &serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Loads one text sample per row of a CSV (with header) or JSONL file.
///
/// Row numbers in errors are 1-based data rows; JSONL parse errors report the
/// 1-based file line.
pub fn load_text_table(
    path: &Path,
    format: TableFormat,
    text_field: &str,
    label_field: Option<&str>,
    opts: &IngestOptions,
) -> Result<Dataset, IngestError> {
    let mut out = Collector::new(opts.lenient);
    let missing = |row: usize, field: &str| IngestError::MissingField {
        row,
        field: field.to_owned(),
    };

    match format {
        TableFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .from_path(path)
                .map_err(|e| csv_error(path, e))?;
            let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
            let text_col = headers.iter().position(|h| h == text_field);
            let label_col = label_field.map(|f| headers.iter().position(|h| h == f));
            for (i, record) in reader.records().enumerate() {
                let row = i + 1;
                let record = record.map_err(|e| csv_error(path, e))?;
                let text = text_col
                    .and_then(|c| record.get(c))
                    .filter(|t| !t.is_empty())
                    .ok_or_else(|| missing(row, text_field))?;
                let label = match (label_field, label_col) {
                    (Some(field), Some(col)) => Some(
                        col.and_then(|c| record.get(c))
                            .filter(|l| !l.is_empty())
                            .ok_or_else(|| missing(row, field))?
                            .to_owned(),
                    ),
                    _ => None,
                };
                out.push(Sample::new(Payload::Text(text.to_owned()), label, row.to_string()))?;
            }
        }
        TableFormat::Jsonl => {
            let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
            let mut row = 0;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|e| IngestError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                row += 1;
                let value: serde_json::Value =
                    serde_json::from_str(&line).map_err(|e| IngestError::ParseError {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                let text = value
                    .get(text_field)
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| missing(row, text_field))?;
                if text.is_empty() {
                    out.warn_or_fail(IngestError::EmptyPayload(row))?;
                    continue;
                }
                let label = match label_field {
                    Some(field) => Some(
                        value
                            .get(field)
                            .and_then(json_field_as_string)
                            .ok_or_else(|| missing(row, field))?,
                    ),
                    None => None,
                };
                out.push(Sample::new(Payload::Text(text.to_owned()), label, row.to_string()))?;
            }
        }
    }

    let name = opts.name.clone().unwrap_or_else(|| default_name(path));
    let source = SourceSpec::Table {
        format,
        text_field: text_field.to_owned(),
        label_field: label_field.map(str::to_owned),
    };
    out.finish(name, Modality::Text, path, source)
}

fn csv_error(path: &Path, err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => IngestError::io(path, e),
        other => IngestError::ParseError {
            line,
            message: format!("{other:?}"),
        },
    }
}
