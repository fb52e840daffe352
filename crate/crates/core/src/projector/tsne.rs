//! Exact t-SNE.
//!
//! Per-point Gaussian bandwidths are calibrated by bisection to a target
//! perplexity, the conditionals are symmetrized into joint probabilities,
//! and a 2D Student-t embedding is fit by gradient descent on KL(P‖Q) with
//! early exaggeration, momentum and per-coordinate adaptive gains.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pca::pca_2d;
use super::{pairwise_distances, DistanceMatrix, Layout2D, ProjectorError};

/// KL divergence is recorded every this many iterations (first at iteration 50).
pub const TRACE_EVERY: usize = 50;
const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const MAX_BRACKET_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TsneInit {
    #[default]
    Pca,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    /// `None` means 30 clipped to `(n - 1) / 3`.
    pub perplexity: Option<f64>,
    pub iterations: usize,
    /// `None` means `max(50, n / 12)`.
    pub learning_rate: Option<f64>,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub init: TsneInit,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: None,
            iterations: 1000,
            learning_rate: None,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            init: TsneInit::Pca,
            seed: 42,
        }
    }
}

impl TsneParams {
    pub fn effective_perplexity(&self, n: usize) -> Result<f64, ProjectorError> {
        let max = (n as f64 - 1.0) / 3.0;
        match self.perplexity {
            None => Ok(30f64.min(max)),
            Some(p) if p > 1.0 && p <= max => Ok(p),
            Some(p) => Err(ProjectorError::PerplexityOutOfRange { perplexity: p, max }),
        }
    }

    pub fn effective_learning_rate(&self, n: usize) -> f64 {
        self.learning_rate.unwrap_or_else(|| (n as f64 / 12.0).max(50.0))
    }
}

/// Calibrated conditional distributions `p_{j|i}`.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Precision `1 / (2 σ_i²)` per point.
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row `i` holds `p_{j|i}`; rows sum to 1 and the diagonal is 0.
    pub conditional: Array2<f64>,
    /// Shannon entropy of each row, in bits.
    pub entropies: Vec<f64>,
}

/// Row distribution and its entropy in bits for precision `beta`.
fn row_distribution(sq: &[f64], i: usize, beta: f64, min_sq: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (j, (o, &s)) in out.iter_mut().zip(sq).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (s - min_sq)).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.log2();
        }
    }
    h
}

fn calibrate_row(d: &DistanceMatrix, i: usize, perplexity: f64) -> Result<(f64, Vec<f64>, f64), ProjectorError> {
    let n = d.n();
    let sq: Vec<f64> = d.row(i).iter().map(|v| v * v).collect();
    let min_sq = sq
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    let spread = sq
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &s)| s - min_sq)
        .sum::<f64>()
        / (n - 1) as f64;
    let target = perplexity.log2();
    let mut row = vec![0.0; n];
    let close = |h: f64| (h.exp2() - perplexity).abs() < ENTROPY_TOL;

    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let mut h = row_distribution(&sq, i, beta, min_sq, &mut row);
    if close(h) {
        return Ok((beta, row, h));
    }
    // Entropy decreases in beta, from log2(n-1) at beta = 0.
    let (mut lo, mut hi);
    if h > target {
        // Entropy cannot drop below log2 of the number of nearest ties
        // (duplicates). If that floor is above the target, use the limit:
        // uniform over the ties.
        let ties = sq.iter().enumerate().filter(|&(j, &s)| j != i && s == min_sq).count();
        if ties > 1 && (ties as f64).log2() >= target - 1e-12 {
            let w = 1.0 / ties as f64;
            for (j, o) in row.iter_mut().enumerate() {
                *o = if j != i && sq[j] == min_sq { w } else { 0.0 };
            }
            return Ok((f64::MAX, row, (ties as f64).log2()));
        }
        lo = beta;
        hi = beta;
        let mut steps = 0;
        while h > target {
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
                return Err(ProjectorError::CalibrationFailure(i));
            }
            lo = hi;
            hi *= 2.0;
            h = row_distribution(&sq, i, hi, min_sq, &mut row);
            if close(h) {
                return Ok((hi, row, h));
            }
        }
    } else {
        if ((n - 1) as f64).log2() < target - 1e-12 {
            return Err(ProjectorError::CalibrationFailure(i));
        }
        lo = 0.0;
        hi = beta;
    }
    for _ in 0..MAX_BISECTIONS {
        beta = 0.5 * (lo + hi);
        h = row_distribution(&sq, i, beta, min_sq, &mut row);
        if close(h) {
            break;
        }
        if h > target {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    Ok((beta, row, h))
}

/// Finds each point's bandwidth so its conditional distribution has
/// perplexity `2^H` equal to `perplexity`.
pub fn tsne_calibrate(d: &DistanceMatrix, perplexity: f64) -> Result<Calibration, ProjectorError> {
    let n = d.n();
    if n < 2 || !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return Err(ProjectorError::PerplexityOutOfRange {
            perplexity,
            max: (n as f64 - 1.0).max(0.0),
        });
    }
    let rows: Vec<(f64, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(d, i, perplexity))
        .collect::<Result<_, _>>()?;
    let mut conditional = Array2::zeros((n, n));
    let mut betas = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for (i, (beta, row, h)) in rows.into_iter().enumerate() {
        conditional.row_mut(i).iter_mut().zip(row).for_each(|(c, v)| *c = v);
        betas.push(beta);
        entropies.push(h);
    }
    let sigmas = betas.iter().map(|b| (0.5 / b).sqrt()).collect();
    Ok(Calibration {
        betas,
        sigmas,
        conditional,
        entropies,
    })
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(cal: &Calibration) -> Array2<f64> {
    let c = &cal.conditional;
    let n = c.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| (c[[i, j]] + c[[j, i]]) / (2.0 * n as f64))
}

#[inline]
fn kernel(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Sum of Student-t kernels over ordered pairs `i != j`, summed row by row.
fn normalizer(y: &[[f64; 2]]) -> f64 {
    let row_sums: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| (0..y.len()).filter(|&j| j != i).map(|j| kernel(&y[i], &y[j])).sum())
        .collect();
    row_sums.iter().sum()
}

/// KL(P‖Q) for joint probabilities `p` and embedding `y`.
pub fn kl_divergence(p: ArrayView2<f64>, y: &[[f64; 2]]) -> f64 {
    let z = normalizer(y);
    let rows: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..y.len() {
                let pij = p[[i, j]];
                if j != i && pij > 0.0 {
                    let q = kernel(&y[i], &y[j]) / z;
                    s += pij * (pij / q).ln();
                }
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Gradient of KL(P‖Q) with `p` scaled by `exaggeration`:
/// `4 Σ_j (e·p_ij − q_ij)(y_i − y_j) / (1 + |y_i − y_j|²)`.
pub fn kl_gradient(p: ArrayView2<f64>, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let z = normalizer(y);
    (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..y.len() {
                if j == i {
                    continue;
                }
                let k = kernel(&y[i], &y[j]);
                let w = (exaggeration * p[[i, j]] - k / z) * k;
                g[0] += w * (y[i][0] - y[j][0]);
                g[1] += w * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect()
}

fn rescale_init(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let var0 = points.iter().map(|p| (p[0] - mean[0]).powi(2)).sum::<f64>() / n;
    let std0 = var0.sqrt();
    let scale = if std0 > 0.0 { INIT_STD / std0 } else { 1.0 };
    points
        .iter()
        .map(|p| [(p[0] - mean[0]) * scale, (p[1] - mean[1]) * scale])
        .collect()
}

fn initial_layout(x: ArrayView2<f64>, params: &TsneParams, warm: Option<&[[f64; 2]]>) -> Result<Vec<[f64; 2]>, ProjectorError> {
    if let Some(w) = warm {
        return Ok(rescale_init(w));
    }
    match params.init {
        TsneInit::Pca => {
            let pca = pca_2d(x)?;
            let mut pts = rescale_init(&pca.points);
            // Fully degenerate data: fall back to a seeded jitter.
            if pts.iter().all(|p| p[0] == 0.0 && p[1] == 0.0) {
                pts = random_init(x.nrows(), params.seed);
            }
            Ok(pts)
        }
        TsneInit::Random => Ok(random_init(x.nrows(), params.seed)),
    }
}

fn random_init(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [a * INIT_STD, b * INIT_STD]
        })
        .collect()
}

/// Runs t-SNE on the rows of `x`. `warm_start`, when given, replaces the
/// PCA initialization (it is recentered and rescaled like it).
pub fn tsne(x: ArrayView2<f64>, params: &TsneParams, warm_start: Option<&[[f64; 2]]>) -> Result<Layout2D, ProjectorError> {
    let n = x.nrows();
    if n < 8 {
        return Err(ProjectorError::TooFewPoints { need: 8, got: n });
    }
    if let Some(w) = warm_start {
        if w.len() != n {
            return Err(ProjectorError::ExternalShapeMismatch { expected: n, got: w.len() });
        }
    }
    let perplexity = params.effective_perplexity(n)?;
    let d = pairwise_distances(x)?;
    let cal = tsne_calibrate(&d, perplexity)?;
    let p = joint_probabilities(&cal);
    drop(cal);
    drop(d);

    let lr = params.effective_learning_rate(n);
    let mut y = initial_layout(x, params, warm_start)?;
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut trace = Vec::with_capacity(params.iterations / TRACE_EVERY);

    for iter in 0..params.iterations {
        let early = iter < params.exaggeration_iters;
        let exaggeration = if early { params.exaggeration } else { 1.0 };
        let momentum = if early { params.momentum_initial } else { params.momentum_final };
        let grad = kl_gradient(p.view(), &y, exaggeration);

        for i in 0..n {
            for c in 0..2 {
                let g = grad[i][c];
                let u = update[i][c];
                gains[i][c] = if (g > 0.0) != (u > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8).max(MIN_GAIN)
                };
                update[i][c] = momentum * u - lr * gains[i][c] * g;
                y[i][c] += update[i][c];
            }
        }
        let mean = [
            y.iter().map(|q| q[0]).sum::<f64>() / n as f64,
            y.iter().map(|q| q[1]).sum::<f64>() / n as f64,
        ];
        for q in y.iter_mut() {
            q[0] -= mean[0];
            q[1] -= mean[1];
        }

        if (iter + 1) % TRACE_EVERY == 0 {
            let kl = kl_divergence(p.view(), &y);
            trace.push(kl);
            if !kl.is_finite() || y.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ProjectorError::NumericalBlowup { iteration: iter + 1, trace });
            }
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ProjectorError::NumericalBlowup {
            iteration: params.iterations,
            trace,
        });
    }

    let converged = match trace.as_slice() {
        [.., a, b] => (a - b).abs() <= 1e-3 * a.abs().max(1e-12),
        _ => false,
    };
    let mut layout = Layout2D::new(y, "tsne");
    layout.seed = params.seed;
    layout.converged = converged;
    layout.objective_trace = trace;
    Ok(layout)
}

/// KL recorded at `iteration` (a multiple of [`TRACE_EVERY`]), if present.
pub fn trace_at(layout: &Layout2D, iteration: usize) -> Option<f64> {
    if iteration == 0 || iteration % TRACE_EVERY != 0 {
        return None;
    }
    layout.objective_trace.get(iteration / TRACE_EVERY - 1).copied()
}
