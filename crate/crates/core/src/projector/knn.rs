use rayon::prelude::*;

use super::{DistanceMatrix, ProjectorError};

/// k-nearest-neighbor graph with Euclidean edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    /// Neighbors of each node as `(index, weight)`, sorted by index.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub symmetrized: bool,
}

impl NeighborGraph {
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search_by_key(&j, |&(v, _)| v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        let total: usize = self.adjacency.iter().map(Vec::len).sum();
        if self.symmetrized {
            total / 2
        } else {
            total
        }
    }

    pub(crate) fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        for (a, b) in [(i, j), (j, i)] {
            if let Err(pos) = self.adjacency[a].binary_search_by_key(&b, |&(v, _)| v) {
                self.adjacency[a].insert(pos, (b, w));
            }
        }
    }
}

/// Indices of all other points ordered by distance from `i`, ties by index.
pub fn neighbor_order(d: &DistanceMatrix, i: usize) -> Vec<usize> {
    let row = d.row(i);
    let mut idx: Vec<usize> = (0..d.n()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx
}

/// The `k` nearest neighbors of every node, symmetrized by union.
pub fn knn_graph(d: &DistanceMatrix, k: usize) -> Result<NeighborGraph, ProjectorError> {
    let n = d.n();
    if k == 0 || k >= n {
        return Err(ProjectorError::KTooLarge { k, n });
    }
    let nearest: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut order = neighbor_order(d, i);
            order.truncate(k);
            order
        })
        .collect();
    let mut graph = NeighborGraph {
        n,
        k,
        adjacency: vec![Vec::with_capacity(2 * k); n],
        symmetrized: true,
    };
    for (i, nbrs) in nearest.iter().enumerate() {
        for &j in nbrs {
            graph.add_edge(i, j, d.get(i, j));
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::pairwise_distances;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn collinear_tie_break() {
        let d = pairwise_distances(array![[0.0], [1.0], [2.0], [3.0]].view()).unwrap();
        let g = knn_graph(&d, 1).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && g.has_edge(2, 3));
        assert!(!g.has_edge(0, 2));
    }

    #[test]
    fn complete_when_k_is_n_minus_one() {
        let d = pairwise_distances(array![[0.0, 1.0], [2.0, 0.5], [3.0, 3.0], [1.0, 1.0]].view()).unwrap();
        let g = knn_graph(&d, 3).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(matches!(knn_graph(&d, 4), Err(ProjectorError::KTooLarge { .. })));
        assert!(matches!(knn_graph(&d, 0), Err(ProjectorError::KTooLarge { .. })));
    }

    #[test]
    fn matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_fn((15, 3), |_| rng.random_range(0.0..1.0));
        let d = pairwise_distances(x.view()).unwrap();
        let k = 4;
        let g = knn_graph(&d, k).unwrap();
        // Oracle: sort (distance, index) pairs for every node independently.
        let mut expected = vec![std::collections::BTreeSet::new(); 15];
        for i in 0..15 {
            let mut pairs: Vec<(f64, usize)> = (0..15).filter(|&j| j != i).map(|j| (d.get(i, j), j)).collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in pairs.iter().take(k) {
                expected[i].insert(j);
                expected[j].insert(i);
            }
        }
        for i in 0..15 {
            let got: Vec<usize> = g.adjacency[i].iter().map(|&(j, _)| j).collect();
            assert_eq!(got, expected[i].iter().copied().collect::<Vec<_>>());
            assert!(got.len() >= k);
            for &(j, w) in &g.adjacency[i] {
                assert_eq!(w, d.get(i, j));
            }
        }
    }
}
