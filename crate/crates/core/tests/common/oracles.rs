//! Brute-force reference implementations, written from the definitions and
//! sharing no code with the library.

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn dist_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|a| points.iter().map(|b| euclid(a, b)).collect()).collect()
}

/// 1-based rank of `j` among the neighbors of `i` (no ties expected).
fn rank(d: &[Vec<f64>], i: usize, j: usize) -> usize {
    1 + (0..d.len()).filter(|&l| l != i && d[i][l] < d[i][j]).count()
}

fn knn(d: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    (0..d.len()).filter(|&j| j != i && rank(d, i, j) <= k).collect()
}

/// Penalizes points that are among the K nearest in `shown` but not in
/// `truth`, by their rank in `truth`.
fn rank_penalty(truth: &[Vec<f64>], shown: &[Vec<f64>], k: usize) -> f64 {
    let n = truth.len() as f64;
    let kf = k as f64;
    let mut sum = 0.0;
    for i in 0..truth.len() {
        let t = knn(truth, i, k);
        for j in knn(shown, i, k) {
            if !t.contains(&j) {
                sum += rank(truth, i, j) as f64 - kf;
            }
        }
    }
    1.0 - 2.0 / (n * kf * (2.0 * n - 3.0 * kf - 1.0)) * sum
}

pub fn trustworthiness(dh: &[Vec<f64>], dl: &[Vec<f64>], k: usize) -> f64 {
    rank_penalty(dh, dl, k)
}

pub fn continuity(dh: &[Vec<f64>], dl: &[Vec<f64>], k: usize) -> f64 {
    rank_penalty(dl, dh, k)
}

/// Spearman correlation over all pairs i<j via the no-ties closed form.
pub fn spearman_no_ties(dh: &[Vec<f64>], dl: &[Vec<f64>]) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..dh.len() {
        for j in i + 1..dh.len() {
            a.push(dh[i][j]);
            b.push(dl[i][j]);
        }
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| 1.0 + v.iter().filter(|y| *y < x).count() as f64)
            .collect()
    };
    let (ra, rb) = (ranks(&a), ranks(&b));
    let m = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(p, q)| (p - q) * (p - q)).sum();
    1.0 - 6.0 * d2 / (m * (m * m - 1.0))
}

/// Mean silhouette; points alone in their class score 0.
pub fn silhouette(d: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = d.len();
    let mut total = 0.0;
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let a = same.iter().map(|&j| d[i][j]).sum::<f64>() / same.len() as f64;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort_unstable();
        others.dedup();
        let b = others
            .iter()
            .map(|&c| {
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                members.iter().map(|&j| d[i][j]).sum::<f64>() / members.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// All-pairs shortest paths by Floyd–Warshall over an adjacency matrix
/// (`f64::INFINITY` for missing edges).
pub fn floyd_warshall(mut w: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = w.len();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = w[i][k] + w[k][j];
                if via < w[i][j] {
                    w[i][j] = via;
                }
            }
        }
    }
    w
}
