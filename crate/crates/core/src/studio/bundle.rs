use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StudioError;
use crate::fusion::FusionConfig;
use crate::gateway::GuidingPrompt;
use crate::projector::{Layout2D, ProjectorSpec};
use crate::quality::MetricsReport;
use crate::store::SampleId;

/// JSON Schema (draft 2020-12) that every exported bundle validates against.
pub const BUNDLE_SCHEMA: &str = include_str!("../../schema/layout_bundle.schema.json");

/// Grid points closer than this count as exact hits.
const GRID_EPS: f64 = 1e-9;

/// Aligned layouts and metrics over an alpha grid, plus per-sample labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBundle {
    /// Content hash of every input that determines the bundle.
    pub id: String,
    pub session_id: String,
    pub dataset: String,
    pub n: usize,
    pub projector: ProjectorSpec,
    /// Ascending; `layouts[i]` and `metrics[i]` belong to `alpha_grid[i]`.
    pub alpha_grid: Vec<f64>,
    pub layouts: Vec<Layout2D>,
    pub metrics: Vec<MetricsReport>,
    pub sample_ids: Vec<SampleId>,
    /// Parsed slot values per sample.
    pub labels: Vec<BTreeMap<String, String>>,
    /// Classifier answer sentence per sample.
    pub label_texts: Vec<String>,
    pub truth_labels: Vec<Option<String>>,
    pub prompt: GuidingPrompt,
    pub prompt_hash: String,
    pub model_tag: String,
    pub classifier_model: String,
    pub fusion: FusionConfig,
}

impl LayoutBundle {
    pub fn validate(&self) -> Result<(), StudioError> {
        let bad = |m: String| Err(StudioError::Internal(format!("bundle {}: {m}", self.id)));
        if self.layouts.len() != self.alpha_grid.len() || self.metrics.len() != self.alpha_grid.len() {
            return bad(format!(
                "{} layouts and {} reports for {} grid points",
                self.layouts.len(),
                self.metrics.len(),
                self.alpha_grid.len()
            ));
        }
        if let Some(l) = self.layouts.iter().find(|l| l.n != self.n || l.points.len() != self.n) {
            return bad(format!("layout at alpha {:?} has {} points, expected {}", l.alpha, l.n, self.n));
        }
        if self.sample_ids.len() != self.n || self.labels.len() != self.n || self.truth_labels.len() != self.n {
            return bad("per-sample arrays disagree with n".into());
        }
        Ok(())
    }

    pub fn grid_index(&self, alpha: f64) -> Option<usize> {
        self.alpha_grid.iter().position(|&a| (a - alpha).abs() <= GRID_EPS)
    }

    pub fn json_schema() -> serde_json::Value {
        serde_json::from_str(BUNDLE_SCHEMA).expect("bundled schema is valid JSON")
    }
}

/// A layout at some alpha; metrics only exist at grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutView {
    pub alpha: f64,
    pub layout: Layout2D,
    pub metrics: Option<MetricsReport>,
}

/// The stored layout at a grid point, or the coordinate-wise linear
/// interpolation of the two neighboring grid layouts (flagged
/// `interpolated`, without metrics).
pub fn get_layout(bundle: &LayoutBundle, alpha: f64) -> Result<LayoutView, StudioError> {
    let (min, max) = match (bundle.alpha_grid.first(), bundle.alpha_grid.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(StudioError::Internal(format!("bundle {} has an empty grid", bundle.id))),
    };
    if !alpha.is_finite() || alpha < min - GRID_EPS || alpha > max + GRID_EPS {
        return Err(StudioError::AlphaOutOfRange { alpha, min, max });
    }
    if let Some(i) = bundle.grid_index(alpha) {
        return Ok(LayoutView {
            alpha: bundle.alpha_grid[i],
            layout: bundle.layouts[i].clone(),
            metrics: Some(bundle.metrics[i].clone()),
        });
    }
    let hi = bundle.alpha_grid.iter().position(|&a| a > alpha).expect("alpha inside grid");
    let lo = hi - 1;
    let (a0, a1) = (bundle.alpha_grid[lo], bundle.alpha_grid[hi]);
    let t = (alpha - a0) / (a1 - a0);
    let (l0, l1) = (&bundle.layouts[lo], &bundle.layouts[hi]);
    let points = l0
        .points
        .iter()
        .zip(&l1.points)
        .map(|(p, q)| [(1.0 - t) * p[0] + t * q[0], (1.0 - t) * p[1] + t * q[1]])
        .collect();
    let mut layout = Layout2D::new(points, l0.projector_id.clone());
    layout.seed = l0.seed;
    layout.alpha = Some(alpha);
    layout.converged = l0.converged && l1.converged;
    layout.flag("interpolated");
    Ok(LayoutView {
        alpha,
        layout,
        metrics: None,
    })
}
