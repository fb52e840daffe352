//! Convex blending of data and label embeddings: `x' = α·x + (1 − α)·y`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{EmbeddingKind, EmbeddingRecord, SampleId};

/// Default fusion-weight grid: both endpoints plus the midpoint region.
pub const DEFAULT_ALPHA_GRID: [f64; 7] = [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("data and label embeddings cover different samples ({0})")]
    IdSetMismatch(String),
    #[error("dimension mismatch: data {data}, label {label}")]
    DimMismatch { data: usize, label: usize },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("alpha grid must be sorted ascending")]
    UnsortedGrid,
    #[error("zero vector for sample {0} cannot be normalized")]
    ZeroVector(SampleId),
    #[error("no embeddings to fuse")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub alpha: f64,
    /// L2-normalize data and label rows before blending.
    pub normalize_inputs: bool,
    /// L2-normalize each blended row.
    pub renormalize_output: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 0.5,
            normalize_inputs: true,
            renormalize_output: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub data_model_tag: String,
    pub label_model_tag: String,
    pub prompt_hash: Option<String>,
}

/// Fused embeddings for one `alpha`, rows in the data records' order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSet {
    pub alpha: f64,
    pub sample_ids: Vec<SampleId>,
    pub vectors: Array2<f64>,
    pub provenance: Provenance,
}

impl FusedSet {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Records of kind `fused` for the embedding cache (components rounded to `f32`).
    pub fn to_records(&self) -> Vec<EmbeddingRecord> {
        self.sample_ids
            .iter()
            .zip(self.vectors.rows())
            .map(|(id, row)| EmbeddingRecord {
                sample_id: id.clone(),
                kind: EmbeddingKind::Fused,
                model_tag: self.provenance.data_model_tag.clone(),
                vector: row.iter().map(|&v| v as f32).collect(),
                prompt_hash: self.provenance.prompt_hash.clone(),
                alpha: Some(self.alpha),
            })
            .collect()
    }
}

/// Data and label rows matched by sample id and optionally normalized,
/// ready to be blended at any `alpha`.
#[derive(Debug, Clone)]
pub struct FusionInputs {
    pub sample_ids: Vec<SampleId>,
    pub data: Array2<f64>,
    pub labels: Array2<f64>,
    provenance: Provenance,
    renormalize_output: bool,
}

fn to_matrix(rows: &[&EmbeddingRecord], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.iter_mut().zip(&src.vector).for_each(|(d, &s)| *d = s as f64);
    }
    m
}

fn l2(row: ArrayView1<f64>) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize_rows(m: &mut Array2<f64>, ids: &[SampleId]) -> Result<(), FusionError> {
    for (mut row, id) in m.rows_mut().into_iter().zip(ids) {
        let norm = l2(row.view());
        if norm == 0.0 {
            return Err(FusionError::ZeroVector(id.clone()));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

impl FusionInputs {
    pub fn new(data: &[EmbeddingRecord], labels: &[EmbeddingRecord], cfg: &FusionConfig) -> Result<Self, FusionError> {
        let first = data.first().ok_or(FusionError::Empty)?;
        let dim = first.dim();
        if data.len() != labels.len() {
            return Err(FusionError::IdSetMismatch(format!(
                "{} data rows, {} label rows",
                data.len(),
                labels.len()
            )));
        }
        let mut by_id: HashMap<&SampleId, &EmbeddingRecord> = HashMap::with_capacity(labels.len());
        for l in labels {
            if by_id.insert(&l.sample_id, l).is_some() {
                return Err(FusionError::IdSetMismatch(format!("duplicate label for {}", l.sample_id)));
            }
        }
        let mut matched = Vec::with_capacity(data.len());
        for d in data {
            if d.dim() != dim {
                return Err(FusionError::DimMismatch { data: d.dim(), label: dim });
            }
            let l = by_id
                .remove(&d.sample_id)
                .ok_or_else(|| FusionError::IdSetMismatch(format!("no label for {}", d.sample_id)))?;
            if l.dim() != dim {
                return Err(FusionError::DimMismatch { data: dim, label: l.dim() });
            }
            matched.push(l);
        }
        let sample_ids: Vec<SampleId> = data.iter().map(|d| d.sample_id.clone()).collect();
        let data_refs: Vec<&EmbeddingRecord> = data.iter().collect();
        let mut x = to_matrix(&data_refs, dim);
        let mut y = to_matrix(&matched, dim);
        if cfg.normalize_inputs {
            normalize_rows(&mut x, &sample_ids)?;
            normalize_rows(&mut y, &sample_ids)?;
        }
        Ok(FusionInputs {
            sample_ids,
            data: x,
            labels: y,
            provenance: Provenance {
                data_model_tag: first.model_tag.clone(),
                label_model_tag: matched[0].model_tag.clone(),
                prompt_hash: matched[0].prompt_hash.clone(),
            },
            renormalize_output: cfg.renormalize_output,
        })
    }

    pub fn blend(&self, alpha: f64) -> Result<FusedSet, FusionError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FusionError::AlphaOutOfRange(alpha));
        }
        let beta = 1.0 - alpha;
        let mut out = Array2::zeros(self.data.raw_dim());
        ndarray::Zip::from(&mut out)
            .and(&self.data)
            .and(&self.labels)
            .for_each(|o, &x, &y| *o = alpha * x + beta * y);
        if self.renormalize_output {
            for mut row in out.axis_iter_mut(Axis(0)) {
                let norm = l2(row.view());
                if norm > 0.0 {
                    row.mapv_inplace(|v| v / norm);
                }
            }
        }
        Ok(FusedSet {
            alpha,
            sample_ids: self.sample_ids.clone(),
            vectors: out,
            provenance: self.provenance.clone(),
        })
    }
}

/// Fuses data and label embeddings at `cfg.alpha`.
pub fn fuse(data: &[EmbeddingRecord], labels: &[EmbeddingRecord], cfg: &FusionConfig) -> Result<FusedSet, FusionError> {
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(FusionError::AlphaOutOfRange(cfg.alpha));
    }
    FusionInputs::new(data, labels, cfg)?.blend(cfg.alpha)
}

/// One fused set per `alpha`; `alphas` must be ascending within `[0, 1]`.
pub fn alpha_sweep(
    data: &[EmbeddingRecord],
    labels: &[EmbeddingRecord],
    alphas: &[f64],
    cfg: &FusionConfig,
) -> Result<Vec<FusedSet>, FusionError> {
    validate_grid(alphas)?;
    let inputs = FusionInputs::new(data, labels, cfg)?;
    alphas.iter().map(|&a| inputs.blend(a)).collect()
}

pub fn validate_grid(alphas: &[f64]) -> Result<(), FusionError> {
    if let Some(&bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(FusionError::AlphaOutOfRange(bad));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FusionError::UnsortedGrid);
    }
    Ok(())
}
