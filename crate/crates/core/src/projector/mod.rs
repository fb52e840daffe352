//! 2D projection of fused embedding sets, and alignment of layouts across
//! the fusion-weight grid.

mod distance;
pub mod isomap;
mod knn;
mod layout;
pub mod mds;
pub mod pca;
pub mod procrustes;
pub mod tsne;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusedSet;

pub use distance::{pairwise_distances, DistanceMatrix};
pub use isomap::{isomap, isomap_from_distances, DEFAULT_K_NEIGHBORS};
pub use knn::{knn_graph, neighbor_order, NeighborGraph};
pub use layout::Layout2D;
pub use mds::{classical_mds, double_center};
pub use pca::pca_2d;
pub use procrustes::{procrustes_align, procrustes_fit, SimilarityTransform};
pub use tsne::{tsne, tsne_calibrate, Calibration, TsneInit, TsneParams, TRACE_EVERY};

#[derive(Debug, Error)]
pub enum ProjectorError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("input contains NaN or infinite values")]
    NonFiniteInput,
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error("k_neighbors = {k} must satisfy 1 <= k < n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("double-centered matrix has no positive eigenvalue")]
    AllNegativeSpectrum,
    #[error("perplexity calibration found no bandwidth bracket for point {0}")]
    CalibrationFailure(usize),
    #[error("perplexity {perplexity} out of range (must be > 1 and <= {max})")]
    PerplexityOutOfRange { perplexity: f64, max: f64 },
    #[error("non-finite t-SNE state at iteration {iteration}")]
    NumericalBlowup { iteration: usize, trace: Vec<f64> },
    #[error("reference layout has all points coincident")]
    DegenerateReference,
    #[error("unknown projection method `{0}` (expected pca, mds, isomap, tsne or external)")]
    UnknownMethod(String),
    #[error("layout has {got} points, expected {expected}")]
    ExternalShapeMismatch { expected: usize, got: usize },
    #[error("external layout: {0}")]
    External(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorMethod {
    Pca,
    Mds,
    Isomap,
    Tsne,
    External,
}

impl ProjectorMethod {
    pub const ALL: [ProjectorMethod; 5] = [Self::Pca, Self::Mds, Self::Isomap, Self::Tsne, Self::External];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pca => "pca",
            Self::Mds => "mds",
            Self::Isomap => "isomap",
            Self::Tsne => "tsne",
            Self::External => "external",
        }
    }
}

impl fmt::Display for ProjectorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectorMethod {
    type Err = ProjectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ProjectorError::UnknownMethod(s.to_owned()))
    }
}

/// Method plus its hyperparameters. Fields that do not apply to `method`
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorSpec {
    pub method: ProjectorMethod,
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub learning_rate: Option<f64>,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub k_neighbors: usize,
    pub seed: u64,
    /// Layout file for `method = external`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_path: Option<PathBuf>,
}

impl Default for ProjectorSpec {
    fn default() -> Self {
        let t = TsneParams::default();
        ProjectorSpec {
            method: ProjectorMethod::Tsne,
            perplexity: t.perplexity,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            exaggeration: t.exaggeration,
            exaggeration_iters: t.exaggeration_iters,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            seed: t.seed,
            external_path: None,
        }
    }
}

impl ProjectorSpec {
    pub fn new(method: ProjectorMethod) -> Self {
        ProjectorSpec {
            method,
            ..Default::default()
        }
    }

    pub fn tsne_params(&self) -> TsneParams {
        TsneParams {
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            exaggeration: self.exaggeration,
            exaggeration_iters: self.exaggeration_iters,
            seed: self.seed,
            ..TsneParams::default()
        }
    }

    /// Checks hyperparameters that only depend on the point count.
    pub fn validate(&self, n: usize) -> Result<(), ProjectorError> {
        match self.method {
            ProjectorMethod::Isomap if self.k_neighbors == 0 || self.k_neighbors >= n => {
                Err(ProjectorError::KTooLarge { k: self.k_neighbors, n })
            }
            ProjectorMethod::Tsne => self.tsne_params().effective_perplexity(n).map(|_| ()),
            ProjectorMethod::External if self.external_path.is_none() => {
                Err(ProjectorError::External("no layout path given".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Projects the rows of `x`. `warm_start` seeds t-SNE's initialization and is
/// ignored by the other methods.
pub fn project_points(
    x: ArrayView2<f64>,
    spec: &ProjectorSpec,
    warm_start: Option<&Layout2D>,
) -> Result<Layout2D, ProjectorError> {
    let n = x.nrows();
    spec.validate(n)?;
    let mut layout = match spec.method {
        ProjectorMethod::Pca => pca_2d(x)?,
        ProjectorMethod::Mds => classical_mds(&pairwise_distances(x)?)?,
        ProjectorMethod::Isomap => isomap(x, spec.k_neighbors)?,
        ProjectorMethod::Tsne => tsne(x, &spec.tsne_params(), warm_start.map(|l| l.points.as_slice()))?,
        ProjectorMethod::External => {
            let path = spec.external_path.as_deref().expect("validated");
            Layout2D::import(path, n)?
        }
    };
    if spec.method != ProjectorMethod::External {
        layout.seed = spec.seed;
    }
    layout.validate()?;
    Ok(layout)
}

/// Projects a fused set; the layout records the set's `alpha`.
pub fn project(fused: &FusedSet, spec: &ProjectorSpec) -> Result<Layout2D, ProjectorError> {
    let mut layout = project_points(fused.vectors.view(), spec, None)?;
    layout.alpha = Some(fused.alpha);
    Ok(layout)
}
