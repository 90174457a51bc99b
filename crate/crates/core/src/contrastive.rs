//! In-batch contrastive loss (InfoNCE) over cosine similarities.
//!
//! For a batch of B query/passage pairs the score matrix is
//! `s[i][j] = cos(q_i, p_j)`; passage `i` is the positive for query `i` and
//! every other passage in the batch is a negative. The loss is the mean
//! over queries of `-log softmax_j(s[i][j] / τ)` at `j = i`.
//!
//! All arithmetic is in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContrastiveError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{queries} queries but {passages} passages")]
    BatchMismatch { queries: usize, passages: usize },
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimMismatch { index: usize, expected: usize, found: usize },
    #[error("vector {0} has zero norm")]
    ZeroVector(usize),
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
}

/// Aligned query and positive-passage vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub queries: Vec<Vec<f64>>,
    pub passages: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    /// ∂L/∂q_i, same shape as the queries.
    pub grad_queries: Vec<Vec<f64>>,
    /// ∂L/∂p_j, same shape as the passages.
    pub grad_passages: Vec<Vec<f64>>,
}

impl ContrastiveBatch {
    pub fn new(queries: Vec<Vec<f64>>, passages: Vec<Vec<f64>>) -> Result<Self, ContrastiveError> {
        if queries.is_empty() {
            return Err(ContrastiveError::EmptyBatch);
        }
        if queries.len() != passages.len() {
            return Err(ContrastiveError::BatchMismatch {
                queries: queries.len(),
                passages: passages.len(),
            });
        }
        let dim = queries[0].len();
        for (index, v) in queries.iter().chain(&passages).enumerate() {
            if v.len() != dim {
                return Err(ContrastiveError::DimMismatch {
                    index,
                    expected: dim,
                    found: v.len(),
                });
            }
            if norm(v) == 0.0 {
                return Err(ContrastiveError::ZeroVector(index));
            }
        }
        Ok(Self { queries, passages })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Cosine score matrix, row = query.
    pub fn scores(&self) -> Vec<Vec<f64>> {
        self.queries
            .iter()
            .map(|q| self.passages.iter().map(|p| cosine(q, p)).collect())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

fn check_tau(tau: f64) -> Result<(), ContrastiveError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(ContrastiveError::BadTemperature(tau))
    }
}

/// Per query row `i`: the loss term `-log softmax_j(s[i][j] / τ)` at
/// `j = i`, and the coefficients `softmax_ij - δ_ij`.
///
/// Both are computed from the differences `(s[i][j] - s[i][i]) / τ`, so a
/// nearly saturated row yields its tiny loss through `ln_1p` rather than
/// by cancelling two large numbers.
fn row_terms(scores: &[Vec<f64>], tau: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut losses = Vec::with_capacity(scores.len());
    let mut coeffs = Vec::with_capacity(scores.len());
    for (i, row) in scores.iter().enumerate() {
        let d: Vec<f64> = row.iter().map(|s| (s - row[i]) / tau).collect();
        let m = d
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(0.0f64, |m, (_, &x)| m.max(x));
        let e: Vec<f64> = d.iter().map(|x| (x - m).exp()).collect();
        let rest: f64 = e.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum();
        let own = (-m).exp();
        let z = own + rest;
        losses.push(if m == 0.0 { rest.ln_1p() } else { m + z.ln() });
        coeffs.push(
            e.iter()
                .enumerate()
                .map(|(j, x)| if j == i { -rest / z } else { x / z })
                .collect(),
        );
    }
    (losses, coeffs)
}

pub fn info_nce_loss(batch: &ContrastiveBatch, tau: f64) -> Result<f64, ContrastiveError> {
    check_tau(tau)?;
    let (losses, _) = row_terms(&batch.scores(), tau);
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Loss and its analytic gradient with respect to every query and passage.
pub fn info_nce_grad(batch: &ContrastiveBatch, tau: f64) -> Result<LossAndGrad, ContrastiveError> {
    check_tau(tau)?;
    let n = batch.len();
    let bf = n as f64;
    let scores = batch.scores();
    let (losses, coeffs) = row_terms(&scores, tau);
    let loss = losses.iter().sum::<f64>() / bf;

    let qn: Vec<f64> = batch.queries.iter().map(|q| norm(q)).collect();
    let pn: Vec<f64> = batch.passages.iter().map(|p| norm(p)).collect();
    let dim = batch.queries[0].len();
    let mut gq = vec![vec![0.0; dim]; n];
    let mut gp = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let g = coeffs[i][j] / (bf * tau);
            if g == 0.0 {
                continue;
            }
            let s = scores[i][j];
            let (q, p) = (&batch.queries[i], &batch.passages[j]);
            for k in 0..dim {
                gq[i][k] += g * (p[k] / (qn[i] * pn[j]) - s * q[k] / (qn[i] * qn[i]));
                gp[j][k] += g * (q[k] / (qn[i] * pn[j]) - s * p[k] / (pn[j] * pn[j]));
            }
        }
    }
    Ok(LossAndGrad {
        loss,
        grad_queries: gq,
        grad_passages: gp,
    })
}

/// A linear encoder `x ↦ W x` shared by queries and passages, trained with
/// plain gradient descent on the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    pub input: usize,
    pub output: usize,
    /// Row-major `output × input`.
    pub weights: Vec<f64>,
}

impl LinearEncoder {
    pub fn random(input: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input as f64).sqrt();
        let weights = (0..input * output)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Self { input, output, weights }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|r| dot(&self.weights[r * self.input..(r + 1) * self.input], x))
            .collect()
    }

    /// One gradient step on a batch of raw input pairs; returns the loss
    /// before the step.
    pub fn step(&mut self, queries: &[Vec<f64>], passages: &[Vec<f64>], tau: f64, lr: f64) -> Result<f64, ContrastiveError> {
        let batch = ContrastiveBatch::new(
            queries.iter().map(|x| self.encode(x)).collect(),
            passages.iter().map(|x| self.encode(x)).collect(),
        )?;
        let out = info_nce_grad(&batch, tau)?;
        let mut grad = vec![0.0; self.weights.len()];
        for (xs, gs) in [(queries, &out.grad_queries), (passages, &out.grad_passages)] {
            for (x, g) in xs.iter().zip(gs) {
                for r in 0..self.output {
                    for c in 0..self.input {
                        grad[r * self.input + c] += g[r] * x[c];
                    }
                }
            }
        }
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w -= lr * g;
        }
        Ok(out.loss)
    }
}

/// Toy paired data: each pair shares a latent vector, observed through two
/// different noisy linear views.
pub fn toy_pairs(count: usize, dim: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * s).collect() };
    let mut qs = Vec::with_capacity(count);
    let mut ps = Vec::with_capacity(count);
    for _ in 0..count {
        let z = gauss(dim, 1.0);
        let nq = gauss(dim, noise);
        let np = gauss(dim, noise);
        qs.push(z.iter().zip(&nq).map(|(a, b)| a + b).collect());
        ps.push(z.iter().zip(&np).map(|(a, b)| a + b).collect());
    }
    (qs, ps)
}
