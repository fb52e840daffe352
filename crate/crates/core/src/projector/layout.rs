use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProjectorError;

/// A 2D scatterplot: one point per sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout2D {
    pub n: usize,
    pub points: Vec<[f64; 2]>,
    pub projector_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_true")]
    pub converged: bool,
    /// Objective samples; for t-SNE the KL divergence every
    /// [`TRACE_EVERY`](super::tsne::TRACE_EVERY) iterations.
    #[serde(default, rename = "trace")]
    pub objective_trace: Vec<f64>,
    /// Conditions worth surfacing: `bridged`, `degenerate_covariance`,
    /// `interpolated`, ...
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn default_true() -> bool {
    true
}

impl Layout2D {
    pub fn new(points: Vec<[f64; 2]>, projector_id: impl Into<String>) -> Self {
        Layout2D {
            n: points.len(),
            points,
            projector_id: projector_id.into(),
            seed: 0,
            alpha: None,
            converged: true,
            objective_trace: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub(crate) fn flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_owned());
        }
    }

    pub fn validate(&self) -> Result<(), ProjectorError> {
        if self.n != self.points.len() {
            return Err(ProjectorError::ExternalShapeMismatch {
                expected: self.n,
                got: self.points.len(),
            });
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ProjectorError::NonFiniteInput);
        }
        Ok(())
    }

    /// Loads an externally computed layout and checks it has `expected_n` points.
    pub fn import(path: &Path, expected_n: usize) -> Result<Self, ProjectorError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProjectorError::External(format!("{}: {e}", path.display())))?;
        let mut layout: Layout2D =
            serde_json::from_str(&text).map_err(|e| ProjectorError::External(format!("{}: {e}", path.display())))?;
        layout.validate()?;
        if layout.n != expected_n {
            return Err(ProjectorError::ExternalShapeMismatch {
                expected: expected_n,
                got: layout.n,
            });
        }
        if !layout.projector_id.starts_with("external") {
            layout.projector_id = format!("external:{}", layout.projector_id);
        }
        Ok(layout)
    }

    pub fn export(&self, path: &Path) -> std::io::Result<()> {
        crate::store::write_json(path, self)
    }
}
