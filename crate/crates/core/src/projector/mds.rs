use ndarray::Array2;

use super::{DistanceMatrix, Layout2D, ProjectorError};
use crate::linalg::top_eigenpairs;

/// `B = -1/2 J D² J` with `J` the centering matrix.
pub fn double_center(d: &DistanceMatrix) -> Array2<f64> {
    let n = d.n();
    let sq = |i: usize, j: usize| d.get(i, j) * d.get(i, j);
    let row_means: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sq(i, j)).sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    Array2::from_shape_fn((n, n), |(i, j)| -0.5 * (sq(i, j) - row_means[i] - row_means[j] + grand))
}

/// Classical (Torgerson) MDS to two dimensions.
///
/// Coordinates are the top two eigenvectors of the double-centered squared
/// distances, scaled by the square roots of their eigenvalues; a negative
/// second eigenvalue is clamped to zero and flagged.
pub fn classical_mds(d: &DistanceMatrix) -> Result<Layout2D, ProjectorError> {
    let n = d.n();
    if n < 3 {
        return Err(ProjectorError::TooFewPoints { need: 3, got: n });
    }
    let b = double_center(d);
    let eig = top_eigenpairs(&b, 2);
    if eig.values[0] <= 0.0 {
        return Err(ProjectorError::AllNegativeSpectrum);
    }
    let mut points = vec![[0.0; 2]; n];
    let mut clamped = false;
    for axis in 0..2 {
        let lambda = eig.values[axis];
        if lambda <= 0.0 {
            clamped = true;
            continue;
        }
        let s = lambda.sqrt();
        for (p, v) in points.iter_mut().zip(&eig.vectors[axis]) {
            p[axis] = v * s;
        }
    }
    let mut layout = Layout2D::new(points, "mds");
    if clamped {
        layout.flag("negative_eigenvalue_clamped");
    }
    Ok(layout)
}
