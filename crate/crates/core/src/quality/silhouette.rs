use std::collections::BTreeMap;

use rayon::prelude::*;

use super::QualityError;
use crate::projector::DistanceMatrix;

/// Per-point silhouette `(b - a) / max(a, b)`. Points alone in their class
/// score 0.
pub fn silhouette_samples<L: Ord + Sync>(d: &DistanceMatrix, labels: &[L]) -> Result<Vec<f64>, QualityError> {
    let n = d.n();
    if labels.len() != n {
        return Err(QualityError::ShapeMismatch {
            what: "labels",
            expected: n,
            got: labels.len(),
        });
    }
    let mut classes: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        let next = classes.len();
        classes.entry(l).or_insert(next);
    }
    if classes.len() < 2 {
        return Err(QualityError::SingleClass);
    }
    let class_of: Vec<usize> = labels.iter().map(|l| classes[l]).collect();
    let mut sizes = vec![0usize; classes.len()];
    for &c in &class_of {
        sizes[c] += 1;
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let own = class_of[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; sizes.len()];
            for (j, &c) in class_of.iter().enumerate() {
                if j != i {
                    sums[c] += d.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = sums
                .iter()
                .zip(&sizes)
                .enumerate()
                .filter(|&(c, _)| c != own)
                .map(|(_, (s, &m))| s / m as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean silhouette over all points.
pub fn silhouette<L: Ord + Sync>(d: &DistanceMatrix, labels: &[L]) -> Result<f64, QualityError> {
    let s = silhouette_samples(d, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}
