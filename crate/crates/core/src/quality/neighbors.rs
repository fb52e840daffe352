use rayon::prelude::*;

use super::{check_same_n, QualityError};
use crate::projector::{neighbor_order, DistanceMatrix};

/// Neighbor order and ranks of one point in one space. Ranks start at 1 for
/// the nearest other point; ties go to the lower index.
#[derive(Debug, Clone)]
pub struct RankRow {
    pub point: usize,
    pub order: Vec<usize>,
    /// `rank[j]` for every `j != point`; `rank[point]` is 0.
    pub rank: Vec<usize>,
}

impl RankRow {
    pub fn new(d: &DistanceMatrix, point: usize) -> Self {
        let order = neighbor_order(d, point);
        let mut rank = vec![0; d.n()];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r + 1;
        }
        RankRow { point, order, rank }
    }

    pub fn nearest(&self, k: usize) -> &[usize] {
        &self.order[..k]
    }
}

fn check_k(n: usize, k: usize) -> Result<(), QualityError> {
    // The normalizer 2 / (N K (2N - 3K - 1)) must be positive and finite,
    // and every point needs K neighbors.
    if k == 0 || 2 * k + 1 >= n {
        return Err(QualityError::KTooLargeForNormalizer { k, n });
    }
    Ok(())
}

/// `1 - 2/(N K (2N - 3K - 1)) Σ_i Σ_{j ∈ U_i} (r(i,j) - K)`, where `U_i` are
/// the `K` nearest neighbors of `i` in `intruder_space` that are not among
/// its `K` nearest in `rank_space`, and `r` ranks in `rank_space`.
fn rank_penalty_score(rank_space: &DistanceMatrix, intruder_space: &DistanceMatrix, k: usize) -> Result<f64, QualityError> {
    let n = check_same_n(rank_space, intruder_space)?;
    check_k(n, k)?;
    let per_point: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ranked = RankRow::new(rank_space, i);
            let intruders = RankRow::new(intruder_space, i);
            intruders
                .nearest(k)
                .iter()
                .map(|&j| ranked.rank[j])
                .filter(|&r| r > k)
                .map(|r| r - k)
                .sum()
        })
        .collect();
    let total: usize = per_point.iter().sum();
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total as f64)
}

/// Penalizes layout neighbors that are not neighbors in the data, by their
/// data-space rank.
pub fn trustworthiness(dh: &DistanceMatrix, dl: &DistanceMatrix, k: usize) -> Result<f64, QualityError> {
    rank_penalty_score(dh, dl, k)
}

/// Penalizes data neighbors missing from the layout neighborhood, by their
/// layout-space rank.
pub fn continuity(dh: &DistanceMatrix, dl: &DistanceMatrix, k: usize) -> Result<f64, QualityError> {
    rank_penalty_score(dl, dh, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DistanceMatrix {
        let pts: Vec<[f64; 2]> = xs.iter().map(|&x| [x, 0.0]).collect();
        DistanceMatrix::from_points_2d(&pts)
    }

    #[test]
    fn swapped_pair_hand_value() {
        let dh = line(&[0.0, 1.0, 3.0, 9.0]);
        let dl = line(&[0.0, 1.0, 9.0, 3.0]);
        assert_eq!(trustworthiness(&dh, &dl, 1).unwrap(), 0.625);
        assert_eq!(continuity(&dh, &dl, 1).unwrap(), 0.625);
    }

    #[test]
    fn identity_is_one() {
        let d = line(&[0.0, 2.0, 3.0, 7.0, 8.5, 20.0]);
        assert_eq!(trustworthiness(&d, &d, 2).unwrap(), 1.0);
        assert_eq!(continuity(&d, &d, 2).unwrap(), 1.0);
    }

    #[test]
    fn k_bounds() {
        let d = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(trustworthiness(&d, &d, 1).is_ok());
        assert_eq!(
            trustworthiness(&d, &d, 2),
            Err(QualityError::KTooLargeForNormalizer { k: 2, n: 5 })
        );
        assert!(continuity(&d, &d, 0).is_err());
    }

    #[test]
    fn rank_row_ties_by_index() {
        let d = line(&[0.0, -1.0, 1.0, 2.0]);
        let r = RankRow::new(&d, 0);
        assert_eq!(r.order, vec![1, 2, 3]);
        assert_eq!(r.rank, vec![0, 1, 2, 3]);
    }
}
