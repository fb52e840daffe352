//! Pipeline orchestration: sessions, layout bundles, jobs, the HTTP service
//! and exports.

mod bundle;
mod config;
mod job;
mod pipeline;
pub mod server;
mod session;
mod svg;
mod thumbnail;

use thiserror::Error;

use crate::fusion::FusionError;
use crate::gateway::{GatewayError, PromptError};
use crate::projector::ProjectorError;
use crate::quality::QualityError;
use crate::store::{CacheError, IngestError, SampleId};

pub use bundle::{get_layout, LayoutBundle, LayoutView, BUNDLE_SCHEMA};
pub use config::{LabelSource, MetricSpace, QualityConfig, ServerConfig, StudioConfig};
pub use job::{JobHandle, JobState, ProjectJob};
pub use pipeline::{JobRequest, Pipeline, PipelineError};
pub use session::{CachePaths, IngestRequest, Session, Workspace};
pub use svg::render_svg;
pub use thumbnail::ThumbnailCache;

#[derive(Debug, Error)]
pub enum StudioError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Projector(#[from] ProjectorError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("alpha {alpha} outside the bundle's grid range [{min}, {max}]")]
    AlphaOutOfRange { alpha: f64, min: f64, max: f64 },
    #[error("sample {0} is not an image")]
    NotAnImage(SampleId),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl StudioError {
    /// Short machine-readable code for error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            StudioError::Ingest(_) => "ingest_failed",
            StudioError::Cache(_) => "cache_error",
            StudioError::Gateway(GatewayError::EndpointUnavailable { .. }) => "endpoint_unavailable",
            StudioError::Gateway(GatewayError::Timeout(_)) => "endpoint_timeout",
            StudioError::Gateway(_) => "gateway_error",
            StudioError::Prompt(_) => "invalid_prompt",
            StudioError::Fusion(_) => "fusion_failed",
            StudioError::Projector(_) => "projection_failed",
            StudioError::Quality(_) => "metrics_failed",
            StudioError::Config(_) => "invalid_config",
            StudioError::NotFound(_) => "not_found",
            StudioError::AlphaOutOfRange { .. } => "alpha_out_of_range",
            StudioError::NotAnImage(_) => "not_an_image",
            StudioError::BadRequest(_) => "bad_request",
            StudioError::Io(_) => "io_error",
            StudioError::Internal(_) => "internal",
        }
    }

    /// Whether the caller can fix this by changing inputs, configuration or
    /// the environment (exit code 1), as opposed to an internal fault (2).
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            StudioError::Io(_)
                | StudioError::Internal(_)
                | StudioError::Cache(_)
                | StudioError::Gateway(GatewayError::EndpointUnavailable { .. } | GatewayError::Timeout(_))
        )
    }
}
