use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LayoutBundle, StudioConfig, StudioError};
use crate::gateway::GuidingPrompt;
use crate::hashing::short_hash;
use crate::store::{
    load_image_dir, load_text_table, read_json, write_json, ClassFrom, Dataset, DatasetManifest, IngestOptions,
    Modality, TableFormat,
};

/// Where to load a dataset from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub source: PathBuf,
    pub modality: Modality,
    #[serde(default)]
    pub class_from: ClassFrom,
    /// Defaults to the file extension.
    #[serde(default)]
    pub format: Option<TableFormat>,
    #[serde(default = "default_text_field")]
    pub text_field: String,
    #[serde(default)]
    pub label_field: Option<String>,
    #[serde(default)]
    pub lenient: bool,
    #[serde(default)]
    pub name: Option<String>,
}

fn default_text_field() -> String {
    "text".into()
}

impl IngestRequest {
    pub fn new(source: impl Into<PathBuf>, modality: Modality) -> Self {
        IngestRequest {
            source: source.into(),
            modality,
            class_from: ClassFrom::Subdir,
            format: None,
            text_field: default_text_field(),
            label_field: None,
            lenient: false,
            name: None,
        }
    }

    pub fn load(&self) -> Result<Dataset, StudioError> {
        let opts = IngestOptions {
            lenient: self.lenient,
            name: self.name.clone(),
        };
        Ok(match self.modality {
            Modality::Image => load_image_dir(&self.source, self.class_from, &opts)?,
            Modality::Text => {
                let format = self.format.or_else(|| TableFormat::from_path(&self.source)).ok_or_else(|| {
                    StudioError::BadRequest(format!("cannot tell table format of {}", self.source.display()))
                })?;
                load_text_table(&self.source, format, &self.text_field, self.label_field.as_deref(), &opts)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePaths {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
}

/// An ingested dataset plus the configuration it is processed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub manifest: DatasetManifest,
    /// Prompt used by jobs that do not bring their own.
    pub prompt: Option<GuidingPrompt>,
    pub caches: CachePaths,
    /// Bundles produced in this session, oldest first.
    pub bundles: Vec<String>,
    pub config: StudioConfig,
}

fn file_safe(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// On-disk layout of a working directory:
///
/// ```text
/// sessions/<id>.json
/// cache/<dataset key>/embeddings-<model>.jsonl
/// cache/<dataset key>/labels-<classifier>.jsonl
/// bundles/<id>.json
/// ```
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{}.json", file_safe(id)))
    }

    pub fn bundle_path(&self, id: &str) -> PathBuf {
        self.root.join("bundles").join(format!("{}.json", file_safe(id)))
    }

    /// Caches are shared by every session over the same samples.
    pub fn cache_paths(&self, manifest: &DatasetManifest, config: &StudioConfig) -> CachePaths {
        let ids: Vec<&str> = manifest.samples.iter().map(|s| s.as_str()).collect();
        let key = &short_hash(ids.join("\n").as_bytes())[..16];
        let dir = self.root.join("cache").join(key);
        CachePaths {
            embeddings: dir.join(format!("embeddings-{}.jsonl", file_safe(&config.gateway.model_tag))),
            labels: dir.join(format!("labels-{}.jsonl", file_safe(&config.gateway.classifier_model))),
        }
    }

    /// Creates the session for `dataset` under `config`, or reopens it if the
    /// same dataset was already ingested with the same configuration.
    pub fn open_session(
        &self,
        dataset: &Dataset,
        config: &StudioConfig,
        prompt: Option<GuidingPrompt>,
    ) -> Result<Session, StudioError> {
        let m = &dataset.manifest;
        let identity = serde_json::json!({
            "samples": m.samples,
            "source_path": m.source_path,
            "source": m.source,
            "name": m.name,
            "config": config.to_toml(),
            "prompt": prompt,
        });
        let id = short_hash(identity.to_string().as_bytes())[..16].to_owned();
        if let Ok(existing) = self.load_session(&id) {
            return Ok(existing);
        }
        let session = Session {
            id,
            manifest: m.clone(),
            prompt,
            caches: self.cache_paths(m, config),
            bundles: Vec::new(),
            config: config.clone(),
        };
        self.save_session(&session)?;
        Ok(session)
    }

    pub fn save_session(&self, session: &Session) -> Result<(), StudioError> {
        Ok(write_json(&self.session_path(&session.id), session)?)
    }

    pub fn load_session(&self, id: &str) -> Result<Session, StudioError> {
        let path = self.session_path(id);
        if !path.exists() {
            return Err(StudioError::NotFound(format!("session {id}")));
        }
        Ok(read_json(&path)?)
    }

    /// Ids of all saved sessions, sorted.
    pub fn list_sessions(&self) -> Vec<String> {
        let mut ids: Vec<String> = std::fs::read_dir(self.root.join("sessions"))
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".json").map(str::to_owned)
            })
            .collect();
        ids.sort();
        ids
    }

    /// Records `bundle_id` in the session file if not already present.
    pub fn attach_bundle(&self, session_id: &str, bundle_id: &str) -> Result<(), StudioError> {
        let mut session = self.load_session(session_id)?;
        if !session.bundles.iter().any(|b| b == bundle_id) {
            session.bundles.push(bundle_id.to_owned());
            self.save_session(&session)?;
        }
        Ok(())
    }

    pub fn save_bundle(&self, bundle: &LayoutBundle) -> Result<PathBuf, StudioError> {
        let path = self.bundle_path(&bundle.id);
        write_json(&path, bundle)?;
        Ok(path)
    }

    pub fn load_bundle(&self, id: &str) -> Result<LayoutBundle, StudioError> {
        let path = self.bundle_path(id);
        if !path.exists() {
            return Err(StudioError::NotFound(format!("bundle {id}")));
        }
        Ok(read_json(&path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_dataset(dir: &Path) -> Dataset {
        let path = dir.join("docs.jsonl");
        std::fs::write(&path, "{\"text\":\"alpha\",\"label\":\"a\"}\n{\"text\":\"beta\",\"label\":\"b\"}\n").unwrap();
        let mut req = IngestRequest::new(&path, Modality::Text);
        req.label_field = Some("label".into());
        req.load().unwrap()
    }

    #[test]
    fn sessions_are_reopened_by_content() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("work"));
        let ds = text_dataset(dir.path());
        let cfg = StudioConfig::default();
        let a = ws.open_session(&ds, &cfg, None).unwrap();
        ws.attach_bundle(&a.id, "b1").unwrap();
        let b = ws.open_session(&ds, &cfg, None).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(b.bundles, vec!["b1".to_owned()]);
        let mut other = cfg.clone();
        other.quality.k = 3;
        assert_ne!(ws.open_session(&ds, &other, None).unwrap().id, a.id);
        assert_eq!(ws.list_sessions().len(), 2);
        assert!(matches!(ws.load_session("nope"), Err(StudioError::NotFound(_))));
    }

    #[test]
    fn unknown_table_format() {
        let req = IngestRequest::new("/tmp/data.txt", Modality::Text);
        assert!(matches!(req.load(), Err(StudioError::BadRequest(_))));
    }
}
