//! Symmetric eigenproblems with deterministic output.
//!
//! Small matrices go through a dense symmetric solver; large ones use
//! shifted subspace iteration, which only needs the leading few pairs.
//! Eigenvectors are sign-fixed so the largest-magnitude component is
//! positive (first index wins ties).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;

/// Matrices up to this order are solved densely.
pub const DENSE_LIMIT: usize = 1200;
const SUBSPACE_TOL: f64 = 1e-10;
const SUBSPACE_MAX_ITERS: usize = 3000;

/// Leading eigenpairs, largest eigenvalue first.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The `k` algebraically largest eigenpairs of the symmetric matrix `m`.
pub fn top_eigenpairs(m: &Array2<f64>, k: usize) -> EigenPairs {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    let k = k.min(n);
    if n <= DENSE_LIMIT {
        dense_top(m, k)
    } else {
        subspace_top(m, k)
    }
}

fn dense_top(m: &Array2<f64>, k: usize) -> EigenPairs {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(eig.eigenvalues[idx]);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        fix_sign(&mut v);
        vectors.push(v);
    }
    EigenPairs { values, vectors }
}

fn orthonormalize(block: &mut [Vec<f64>]) {
    for i in 0..block.len() {
        for _ in 0..2 {
            for j in 0..i {
                let dot: f64 = block[i].iter().zip(&block[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = block.split_at_mut(i);
                tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = block[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            block[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

fn apply(m: &Array2<f64>, shift: f64, v: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = m.row(i);
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            dot + shift * v[i]
        })
        .collect()
}

fn subspace_top(m: &Array2<f64>, k: usize) -> EigenPairs {
    let n = m.nrows();
    let block_size = (k + 6).min(n);
    // Gershgorin bound makes the shifted matrix positive semidefinite, so the
    // dominant subspace is the algebraically largest one.
    let shift = (0..n)
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    // Deterministic start: smooth, linearly independent columns.
    let mut block: Vec<Vec<f64>> = (0..block_size)
        .map(|c| {
            (0..n)
                .map(|i| ((i as f64 + 1.0) * (c as f64 + 1.0) * 0.618_033_988_75).sin() + if i % block_size == c { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    orthonormalize(&mut block);

    let mut ritz_values = vec![0.0; block_size];
    let mut ritz_vectors = block.clone();
    for _ in 0..SUBSPACE_MAX_ITERS {
        let images: Vec<Vec<f64>> = block.iter().map(|v| apply(m, shift, v)).collect();
        // Rayleigh-Ritz on the current block.
        let small = DMatrix::from_fn(block_size, block_size, |i, j| {
            block[i].iter().zip(&images[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        let small = (&small + small.transpose()) * 0.5;
        let eig = SymmetricEigen::new(small);
        let mut order: Vec<usize> = (0..block_size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut converged = true;
        for (slot, &idx) in order.iter().enumerate() {
            let coeffs = eig.eigenvectors.column(idx);
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for (c, w) in coeffs.iter().enumerate() {
                v.iter_mut().zip(&block[c]).for_each(|(a, b)| *a += w * b);
                av.iter_mut().zip(&images[c]).for_each(|(a, b)| *a += w * b);
            }
            let lambda = eig.eigenvalues[idx];
            if slot < k {
                let resid = av.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
                if resid > SUBSPACE_TOL * shift.max(1.0) {
                    converged = false;
                }
            }
            ritz_values[slot] = lambda - shift;
            ritz_vectors[slot] = v;
        }
        if converged {
            break;
        }
        block = images;
        orthonormalize(&mut block);
    }
    let mut vectors: Vec<Vec<f64>> = ritz_vectors.into_iter().take(k).collect();
    vectors.iter_mut().for_each(|v| fix_sign(v));
    EigenPairs {
        values: ritz_values.into_iter().take(k).collect(),
        vectors,
    }
}
