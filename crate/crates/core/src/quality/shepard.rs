use std::io;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_same_n, QualityError};
use crate::projector::DistanceMatrix;

/// Seed for pair sampling when none is given.
pub const SHEPARD_SEED: u64 = 42;

/// Data-space vs layout-space distance for pairs `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShepardDiagram {
    pub pairs: Vec<(f64, f64)>,
    pub spearman_rho: f64,
    pub sampled: bool,
}

impl ShepardDiagram {
    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["data_distance", "layout_distance"])?;
        for (a, b) in &self.pairs {
            w.write_record([a.to_string(), b.to_string()])?;
        }
        w.flush()
    }
}

/// Ranks starting at 1; tied values share their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, QualityError> {
    if a.len() != b.len() {
        return Err(QualityError::ShapeMismatch {
            what: "second sample",
            expected: a.len(),
            got: b.len(),
        });
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    if a.iter().all(|&v| v == a[0]) {
        return Err(QualityError::ZeroVariance("data"));
    }
    if b.iter().all(|&v| v == b[0]) {
        return Err(QualityError::ZeroVariance("layout"));
    }
    pearson(&ra, &rb).ok_or(QualityError::ZeroVariance("data"))
}

/// Pair `(i, j)`, `i < j`, at position `p` of the row-major upper triangle.
fn pair_at(n: usize, p: usize) -> (usize, usize) {
    // Row i starts at offset(i) = i*n - i(i+1)/2; find the last row start <= p.
    let offset = |i: usize| i * n - i * (i + 1) / 2;
    let (mut lo, mut hi) = (0, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if offset(mid) <= p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = if offset(hi) <= p { hi } else { lo };
    (i, i + 1 + (p - offset(i)))
}

/// Shepard diagram over all pairs, or over `pair_budget` pairs drawn without
/// replacement (seeded) when there are more pairs than that.
pub fn shepard_spearman(dh: &DistanceMatrix, dl: &DistanceMatrix, pair_budget: usize) -> Result<ShepardDiagram, QualityError> {
    shepard_spearman_seeded(dh, dl, pair_budget, SHEPARD_SEED)
}

pub fn shepard_spearman_seeded(
    dh: &DistanceMatrix,
    dl: &DistanceMatrix,
    pair_budget: usize,
    seed: u64,
) -> Result<ShepardDiagram, QualityError> {
    let n = check_same_n(dh, dl)?;
    if n < 3 {
        return Err(QualityError::TooFewPoints { need: 3, got: n });
    }
    let total = n * (n - 1) / 2;
    let sampled = total > pair_budget.max(1);
    let pairs: Vec<(f64, f64)> = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = index::sample(&mut rng, total, pair_budget.max(1)).into_vec();
        picks.sort_unstable();
        picks
            .into_iter()
            .map(|p| {
                let (i, j) = pair_at(n, p);
                (dh.get(i, j), dl.get(i, j))
            })
            .collect()
    } else {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (dh.get(i, j), dl.get(i, j)))
            .collect()
    };
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let spearman_rho = spearman(&a, &b)?;
    Ok(ShepardDiagram {
        pairs,
        spearman_rho,
        sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn pair_indexing_round_trip() {
        let n = 7;
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(pair_at(n, p), (i, j));
                p += 1;
            }
        }
    }

    #[test]
    fn scaled_layout_and_reversal() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [4.0, 4.0], [-2.0, 1.0]];
        let dh = DistanceMatrix::from_points_2d(&pts);
        assert_eq!(shepard_spearman(&dh, &dh.scaled(2.0), 100).unwrap().spearman_rho, 1.0);
        // Four points whose six pair distances are rank-reversed.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn zero_variance() {
        let d = DistanceMatrix::new(3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let dl = DistanceMatrix::from_points_2d(&pts);
        assert_eq!(shepard_spearman(&d, &dl, 10), Err(QualityError::ZeroVariance("data")));
    }

    #[test]
    fn sampling_is_seeded() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [i as f64, ((i * 7) % 11) as f64]).collect();
        let dh = DistanceMatrix::from_points_2d(&pts);
        let dl = dh.scaled(0.5);
        let a = shepard_spearman(&dh, &dl, 100).unwrap();
        let b = shepard_spearman(&dh, &dl, 100).unwrap();
        assert!(a.sampled);
        assert_eq!(a.pairs.len(), 100);
        assert_eq!(a, b);
        assert!(!shepard_spearman(&dh, &dl, 780).unwrap().sampled);
    }
}
