use ndarray::ArrayView2;
use rayon::prelude::*;

use super::ProjectorError;

/// Dense symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, non-negativity and the zero diagonal.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, ProjectorError> {
        if data.len() != n * n {
            return Err(ProjectorError::ExternalShapeMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(ProjectorError::InvalidDistances(format!("d[{i}][{i}] != 0")));
            }
            for j in i + 1..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if !a.is_finite() || a < 0.0 || a != b {
                    return Err(ProjectorError::InvalidDistances(format!("d[{i}][{j}]={a}, d[{j}][{i}]={b}")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        DistanceMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Multiplies every distance by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        DistanceMatrix {
            n: self.n,
            data: self.data.iter().map(|d| d * c).collect(),
        }
    }

    pub fn from_points_2d(points: &[[f64; 2]]) -> Self {
        let n = points.len();
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let p = points[i];
                points.iter().map(move |q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    (dx * dx + dy * dy).sqrt()
                })
            })
            .collect();
        DistanceMatrix { n, data }
    }
}

/// Exact Euclidean distances between the rows of `x`.
pub fn pairwise_distances(x: ArrayView2<f64>) -> Result<DistanceMatrix, ProjectorError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ProjectorError::TooFewPoints { need: 2, got: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ProjectorError::NonFiniteInput);
    }
    let data = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = x.row(i);
            (0..n).map(move |j| {
                let b = x.row(j);
                // (a-b)^2 == (b-a)^2 bitwise, so the result is exactly symmetric.
                a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
            })
        })
        .collect();
    Ok(DistanceMatrix { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_four_five() {
        let d = pairwise_distances(array![[0.0, 0.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn identical_points() {
        let d = pairwise_distances(array![[1.5, -2.0], [1.5, -2.0]].view()).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((20, 7), |_| rng.random_range(-5.0..5.0));
        let d = pairwise_distances(x.view()).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += (x[[i, k]] - x[[j, k]]).powi(2);
                }
                assert!((d.get(i, j) - s.sqrt()).abs() < 1e-12);
            }
        }
        assert!(DistanceMatrix::new(20, d.as_slice().to_vec()).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            pairwise_distances(array![[f64::NAN, 0.0], [0.0, 0.0]].view()),
            Err(ProjectorError::NonFiniteInput)
        ));
        assert!(matches!(
            pairwise_distances(array![[0.0, 0.0]].view()),
            Err(ProjectorError::TooFewPoints { .. })
        ));
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
    }
}
