//! Prompt-steerable dimensionality reduction.
//!
//! Data embeddings are blended with embeddings of zero-shot textual labels
//! produced under a user-written guiding prompt, and the blended space is
//! projected to 2D. A fusion weight `alpha` moves the view between the
//! data-only projection (`alpha = 1`) and the label-only one (`alpha = 0`).
//!
//! The crate is split by pipeline stage:
//!
//! - [`store`]: dataset ingestion, sample identities, embedding caches.
//! - [`gateway`]: guiding prompts, label parsing, HTTP clients for the
//!   embedder and classifier endpoints, deterministic mock servers.
//! - [`fusion`]: convex blending of data and label embeddings.
//! - [`projector`]: PCA, classical MDS, Isomap, exact t-SNE, Procrustes.
//! - [`quality`]: trustworthiness, continuity, Shepard correlation, silhouette.
//! - [`studio`]: pipeline orchestration, layout bundles, HTTP service.

pub mod fusion;
pub mod gateway;
pub mod linalg;
pub mod projector;
pub mod quality;
pub mod store;
pub mod studio;

mod hashing;

pub use fusion::{alpha_sweep, fuse, FusedSet, FusionConfig, FusionError};
pub use gateway::{GatewayConfig, GatewayError, GuidingPrompt, SlotSpec, TextLabel};
pub use projector::{Layout2D, ProjectorError, ProjectorMethod, ProjectorSpec};
pub use quality::{MetricsReport, QualityError};
pub use store::{Dataset, DatasetManifest, EmbeddingKind, EmbeddingRecord, Modality, Sample, SampleId};
