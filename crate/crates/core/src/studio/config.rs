use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StudioError;
use crate::fusion::{FusionConfig, DEFAULT_ALPHA_GRID};
use crate::gateway::GatewayConfig;
use crate::projector::ProjectorSpec;
use crate::quality::DEFAULT_K;

pub const WORKDIR_ENV: &str = "SEMPROJ_WORKDIR";
pub const BIND_ENV: &str = "SEMPROJ_BIND";
pub const PARALLELISM_ENV: &str = "SEMPROJ_PARALLELISM";
pub const STATIC_DIR_ENV: &str = "SEMPROJ_STATIC_DIR";

/// Which per-sample labels the silhouette is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Ground-truth labels when every sample has one, else the class slot.
    #[default]
    Auto,
    Truth,
    /// The zero-shot value of the prompt's class slot.
    Class,
}

/// High-dimensional space the layout at each alpha is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    /// The fused embeddings at that alpha.
    #[default]
    Fused,
    /// The data embeddings, whatever the alpha.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub k: usize,
    pub label_source: LabelSource,
    pub metric_space: MetricSpace,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            k: DEFAULT_K,
            label_source: LabelSource::Auto,
            metric_space: MetricSpace::Fused,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    /// Directory served at `/` (the browser front end), if any.
    pub static_dir: Option<PathBuf>,
    pub thumbnail_size: u32,
    pub max_thumbnail_size: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            static_dir: None,
            thumbnail_size: 64,
            max_thumbnail_size: 1024,
        }
    }
}

/// Everything a session needs; loaded from TOML with environment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudioConfig {
    pub workdir: PathBuf,
    pub alpha_grid: Vec<f64>,
    pub gateway: GatewayConfig,
    pub fusion: FusionConfig,
    pub projector: ProjectorSpec,
    pub quality: QualityConfig,
    pub server: ServerConfig,
}

impl Default for StudioConfig {
    fn default() -> Self {
        StudioConfig {
            workdir: PathBuf::from("semproj-work"),
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            gateway: GatewayConfig::default(),
            fusion: FusionConfig::default(),
            projector: ProjectorSpec::default(),
            quality: QualityConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl StudioConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudioError> {
        toml::from_str(text).map_err(|e| StudioError::Config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, StudioError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| StudioError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), StudioError> {
        self.gateway.apply_env();
        if let Ok(dir) = std::env::var(WORKDIR_ENV) {
            self.workdir = dir.into();
        }
        if let Ok(bind) = std::env::var(BIND_ENV) {
            self.server.bind = bind;
        }
        if let Ok(dir) = std::env::var(STATIC_DIR_ENV) {
            self.server.static_dir = Some(dir.into());
        }
        if let Ok(p) = std::env::var(PARALLELISM_ENV) {
            self.gateway.parallelism = p
                .parse()
                .map_err(|_| StudioError::Config(format!("{PARALLELISM_ENV}={p} is not a positive integer")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
