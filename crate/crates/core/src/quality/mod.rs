//! Projection quality: trustworthiness, continuity, Shepard-diagram
//! Spearman correlation and silhouette.

mod neighbors;
mod shepard;
mod silhouette;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projector::{DistanceMatrix, Layout2D};

pub use neighbors::{continuity, trustworthiness, RankRow};
pub use shepard::{shepard_spearman, shepard_spearman_seeded, spearman, ShepardDiagram, SHEPARD_SEED};
pub use silhouette::{silhouette, silhouette_samples};

/// Neighborhood size used when none is given.
pub const DEFAULT_K: usize = 7;
/// Above this many points the Shepard correlation is computed on a sample.
pub const SAMPLING_THRESHOLD: usize = 2000;
/// Pairs drawn when sampling.
pub const DEFAULT_PAIR_BUDGET: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("K = {k} too large for n = {n}: need 1 <= K and 2K < n - 1")]
    KTooLargeForNormalizer { k: usize, n: usize },
    #[error("all pairwise distances are equal in the {0} space")]
    ZeroVariance(&'static str),
    #[error("silhouette needs at least two distinct labels")]
    SingleClass,
    #[error("size mismatch: {what} has {got} entries, expected {expected}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
}

pub(crate) fn check_same_n(dh: &DistanceMatrix, dl: &DistanceMatrix) -> Result<usize, QualityError> {
    if dh.n() != dl.n() {
        return Err(QualityError::ShapeMismatch {
            what: "layout distances",
            expected: dh.n(),
            got: dl.n(),
        });
    }
    Ok(dh.n())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "T")]
    pub trustworthiness: f64,
    #[serde(rename = "C")]
    pub continuity: f64,
    /// Spearman correlation of the Shepard diagram, in [-1, 1].
    #[serde(rename = "R")]
    pub shepard_rho: f64,
    #[serde(rename = "S")]
    pub silhouette: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub label_column: String,
    pub n_pairs_sampled: usize,
}

/// Pair budget for `n` points: every pair up to [`SAMPLING_THRESHOLD`]
/// points, [`DEFAULT_PAIR_BUDGET`] beyond.
pub fn pair_budget_for(n: usize) -> usize {
    if n > SAMPLING_THRESHOLD {
        DEFAULT_PAIR_BUDGET
    } else {
        n * n.saturating_sub(1) / 2
    }
}

/// All four metrics of `layout` against the high-dimensional distances `dh`.
/// `labels` drive the silhouette and `label_column` names where they came from.
pub fn full_report<L: Ord + Sync>(
    dh: &DistanceMatrix,
    layout: &Layout2D,
    labels: &[L],
    label_column: &str,
    k: usize,
) -> Result<MetricsReport, QualityError> {
    if layout.points.len() != dh.n() {
        return Err(QualityError::ShapeMismatch {
            what: "layout",
            expected: dh.n(),
            got: layout.points.len(),
        });
    }
    let dl = DistanceMatrix::from_points_2d(&layout.points);
    report_from_distances(dh, &dl, labels, label_column, k)
}

pub fn report_from_distances<L: Ord + Sync>(
    dh: &DistanceMatrix,
    dl: &DistanceMatrix,
    labels: &[L],
    label_column: &str,
    k: usize,
) -> Result<MetricsReport, QualityError> {
    let n = check_same_n(dh, dl)?;
    let shepard = shepard_spearman(dh, dl, pair_budget_for(n))?;
    Ok(MetricsReport {
        trustworthiness: trustworthiness(dh, dl, k)?,
        continuity: continuity(dh, dl, k)?,
        shepard_rho: shepard.spearman_rho,
        silhouette: silhouette(dl, labels)?,
        k,
        label_column: label_column.to_owned(),
        n_pairs_sampled: shepard.pairs.len(),
    })
}
