use serde::{Deserialize, Serialize};

use super::{Layout2D, ProjectorError};

/// `p ↦ linear · p + translation`, where `linear` is a scaled rotation or
/// reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
    pub scale: f64,
    pub reflection: bool,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
            scale: 1.0,
            reflection: false,
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.linear;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + self.translation[0],
            m[1][0] * p[0] + m[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn apply_all(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points.iter().map(|&p| self.apply(p)).collect()
    }
}

pub fn sum_sq_residual(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum()
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ]
}

/// Least-squares similarity transform taking `moving` onto `reference`.
pub fn procrustes_fit(moving: &[[f64; 2]], reference: &[[f64; 2]]) -> Result<SimilarityTransform, ProjectorError> {
    if moving.len() != reference.len() {
        return Err(ProjectorError::ExternalShapeMismatch {
            expected: reference.len(),
            got: moving.len(),
        });
    }
    if reference.is_empty() {
        return Err(ProjectorError::DegenerateReference);
    }
    let mc = centroid(moving);
    let rc = centroid(reference);
    let m: Vec<[f64; 2]> = moving.iter().map(|p| [p[0] - mc[0], p[1] - mc[1]]).collect();
    let r: Vec<[f64; 2]> = reference.iter().map(|p| [p[0] - rc[0], p[1] - rc[1]]).collect();
    if r.iter().all(|p| p[0] == 0.0 && p[1] == 0.0) {
        return Err(ProjectorError::DegenerateReference);
    }
    let norm_m: f64 = m.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();

    // Rotation: maximize a·cosθ + b·sinθ. Reflection: same after y ↦ -y.
    let (mut a, mut b, mut a_ref, mut b_ref) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in m.iter().zip(&r) {
        a += p[0] * q[0] + p[1] * q[1];
        b += p[0] * q[1] - p[1] * q[0];
        a_ref += p[0] * q[0] - p[1] * q[1];
        b_ref += p[0] * q[1] + p[1] * q[0];
    }

    let rot_score = a.hypot(b);
    let ref_score = a_ref.hypot(b_ref);
    let reflection = ref_score > rot_score;
    let (score, c, s) = if reflection {
        (ref_score, a_ref, b_ref)
    } else {
        (rot_score, a, b)
    };
    let (cos, sin) = if score > 0.0 { (c / score, s / score) } else { (1.0, 0.0) };
    let scale = if norm_m > 0.0 { score / norm_m } else { 0.0 };
    // Rotation R = [[cos, -sin], [sin, cos]]; reflection F = diag(1, -1) applied first.
    let linear = if reflection {
        [[scale * cos, scale * sin], [scale * sin, -scale * cos]]
    } else {
        [[scale * cos, -scale * sin], [scale * sin, scale * cos]]
    };
    let translation = [
        rc[0] - (linear[0][0] * mc[0] + linear[0][1] * mc[1]),
        rc[1] - (linear[1][0] * mc[0] + linear[1][1] * mc[1]),
    ];
    Ok(SimilarityTransform {
        linear,
        translation,
        scale,
        reflection,
    })
}

/// Returns `moving` superimposed on `reference` by the optimal similarity transform.
pub fn procrustes_align(moving: &Layout2D, reference: &Layout2D) -> Result<Layout2D, ProjectorError> {
    let t = procrustes_fit(&moving.points, &reference.points)?;
    let mut out = moving.clone();
    out.points = t.apply_all(&moving.points);
    Ok(out)
}
