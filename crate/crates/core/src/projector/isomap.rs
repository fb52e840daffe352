use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::knn::{knn_graph, NeighborGraph};
use super::mds::classical_mds;
use super::{pairwise_distances, DistanceMatrix, Layout2D, ProjectorError};

pub const DEFAULT_K_NEIGHBORS: usize = 10;

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node index.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(graph: &NeighborGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &graph.adjacency[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    dist
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected component id per node, numbered by smallest member index.
fn components(graph: &NeighborGraph) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..graph.n).collect();
    for (i, nbrs) in graph.adjacency.iter().enumerate() {
        for &(j, _) in nbrs {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = vec![usize::MAX; graph.n];
    let mut next = 0;
    let mut label_of_root = BTreeMap::new();
    for i in 0..graph.n {
        let root = find(&mut parent, i);
        let id = *label_of_root.entry(root).or_insert_with(|| {
            next += 1;
            next - 1
        });
        ids[i] = id;
    }
    ids
}

/// Joins disconnected components with minimum-spanning-tree edges over the
/// shortest inter-component Euclidean links. Returns whether any edge was added.
pub fn bridge_components(graph: &mut NeighborGraph, d: &DistanceMatrix) -> bool {
    let comp = components(graph);
    let count = comp.iter().max().map_or(0, |m| m + 1);
    if count <= 1 {
        return false;
    }
    // Shortest link between each pair of components, ties by (i, j).
    let mut links: BTreeMap<(usize, usize), (f64, usize, usize)> = BTreeMap::new();
    for i in 0..graph.n {
        for j in i + 1..graph.n {
            let (a, b) = (comp[i], comp[j]);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            let w = d.get(i, j);
            links
                .entry(key)
                .and_modify(|best| {
                    if w < best.0 {
                        *best = (w, i, j);
                    }
                })
                .or_insert((w, i, j));
        }
    }
    let mut candidates: Vec<(f64, usize, usize, usize, usize)> =
        links.into_iter().map(|((a, b), (w, i, j))| (w, i, j, a, b)).collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut parent: Vec<usize> = (0..count).collect();
    for (w, i, j, a, b) in candidates {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            graph.add_edge(i, j, w);
        }
    }
    true
}

/// All-pairs shortest-path lengths over `graph` (Dijkstra from every node).
pub fn geodesic_distances(graph: &NeighborGraph) -> DistanceMatrix {
    let n = graph.n;
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(graph, s)).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Dijkstra from either end may differ in the last bit; keep the
            // matrix exactly symmetric.
            data[i * n + j] = if i == j { 0.0 } else { rows[i][j].min(rows[j][i]) };
        }
    }
    DistanceMatrix::from_raw(n, data)
}

/// Isomap from a precomputed Euclidean distance matrix.
pub fn isomap_from_distances(d: &DistanceMatrix, k: usize) -> Result<(Layout2D, DistanceMatrix), ProjectorError> {
    if d.n() < 4 {
        return Err(ProjectorError::TooFewPoints { need: 4, got: d.n() });
    }
    let mut graph = knn_graph(d, k)?;
    let bridged = bridge_components(&mut graph, d);
    let geodesic = geodesic_distances(&graph);
    let mut layout = classical_mds(&geodesic)?;
    layout.projector_id = "isomap".into();
    if bridged {
        layout.flag("bridged");
    }
    Ok((layout, geodesic))
}

/// Isomap: classical MDS on geodesic distances over the k-NN graph.
pub fn isomap(x: ArrayView2<f64>, k: usize) -> Result<Layout2D, ProjectorError> {
    let d = pairwise_distances(x)?;
    Ok(isomap_from_distances(&d, k)?.0)
}
