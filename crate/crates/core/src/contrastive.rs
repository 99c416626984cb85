//! Temperature-scaled contrastive loss over paired mini-batches.
//!
//! A batch holds `2C` vectors laid out so that (0-based) positions `2k` and `2k + 1`
//! form the k-th positive pair. For anchor `i` with partner `j`,
//!
//! ```text
//! l(i, j) = -log( exp(s_ij / τ) / Σ_{k ≠ i} exp(s_ik / τ) )
//! L       = 1/(2C) Σ_k [ l(2k, 2k+1) + l(2k+1, 2k) ]
//! ```
//!
//! The partner stays in the denominator; only the anchor itself is excluded.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    /// Negated L1 distance.
    #[serde(alias = "manhattan")]
    NegManhattan,
    /// Negated L2 distance.
    #[serde(alias = "euclidean")]
    NegEuclidean,
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "manhattan" | "neg_manhattan" => Ok(Self::NegManhattan),
            "euclidean" | "neg_euclidean" => Ok(Self::NegEuclidean),
            other => Err(Error::InvalidConfig(format!(
                "unknown similarity `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::NegManhattan => "manhattan",
            Self::NegEuclidean => "euclidean",
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn similarity(kind: SimilarityKind, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    Ok(match kind {
        SimilarityKind::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            dot(a, b) / (na * nb)
        }
        SimilarityKind::NegEuclidean => -a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        SimilarityKind::NegManhattan => -a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>(),
    })
}

/// Gradient of `similarity(kind, a, b)` with respect to `a`.
fn similarity_grad(kind: SimilarityKind, a: &[f64], b: &[f64]) -> Vec<f64> {
    match kind {
        SimilarityKind::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            let s = dot(a, b) / (na * nb);
            a.iter()
                .zip(b)
                .map(|(x, y)| y / (na * nb) - s * x / (na * na))
                .collect()
        }
        SimilarityKind::NegEuclidean => {
            let d = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if d == 0.0 {
                return vec![0.0; a.len()];
            }
            a.iter().zip(b).map(|(x, y)| -(x - y) / d).collect()
        }
        SimilarityKind::NegManhattan => a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let diff = x - y;
                if diff > 0.0 {
                    -1.0
                } else if diff < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

fn check_structure(latents: &[Vec<f64>]) -> Result<()> {
    if latents.len() < 4 || !latents.len().is_multiple_of(2) {
        return Err(Error::InvalidBatch(format!(
            "batch length must be even and >= 4, got {}",
            latents.len()
        )));
    }
    let d = latents[0].len();
    if latents.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidBatch("vectors differ in dimension".into()));
    }
    Ok(())
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

/// A validated batch of unit-norm latents in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLatents(Vec<Vec<f64>>);

impl BatchLatents {
    pub fn new(latents: Vec<Vec<f64>>) -> Result<Self> {
        check_structure(&latents)?;
        for (i, v) in latents.iter().enumerate() {
            if (norm(v) - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidBatch(format!("vector {i} is not unit-norm")));
            }
        }
        Ok(Self(latents))
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn pair_count(&self) -> usize {
        self.0.len() / 2
    }
}

/// Full similarity matrix `S[i][j] = similarity(v_i, v_j)`.
pub fn pairwise_similarities(kind: SimilarityKind, latents: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_structure(latents)?;
    let n = latents.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = similarity(kind, &latents[i], &latents[j])?;
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    Ok(s)
}

/// Index of the positive partner of `i` (0-based).
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// Log of the softmax denominator for anchor `i`: `log Σ_{k≠i} exp(row[k]/τ)`,
/// evaluated with max subtraction.
fn log_denominator(row: &[f64], i: usize, tau: f64) -> f64 {
    let max = row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &s)| s / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &s)| (s / tau - max).exp())
        .sum();
    max + sum.ln()
}

/// `l(i, j)` from row `i` of the similarity matrix.
pub fn pair_loss(row: &[f64], i: usize, j: usize, tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    if i == j || i >= row.len() || j >= row.len() {
        return Err(Error::InvalidBatch(format!(
            "pair ({i}, {j}) invalid for row of length {}",
            row.len()
        )));
    }
    Ok(log_denominator(row, i, tau) - row[j] / tau)
}

pub fn loss_from_similarities(s: &[Vec<f64>], tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    let n = s.len();
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidBatch(format!("batch length {n}")));
    }
    let mut total = 0.0;
    for (i, row) in s.iter().enumerate() {
        total += pair_loss(row, i, partner(i), tau)?;
    }
    Ok(total / n as f64)
}

pub fn batch_contrastive_loss(latents: &[Vec<f64>], kind: SimilarityKind, tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    let s = pairwise_similarities(kind, latents)?;
    loss_from_similarities(&s, tau)
}

/// Loss value and `dL/dv_i` for every vector in the batch.
pub fn contrastive_backward(
    latents: &[Vec<f64>],
    kind: SimilarityKind,
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_temperature(tau)?;
    let s = pairwise_similarities(kind, latents)?;
    let loss = loss_from_similarities(&s, tau)?;
    let n = latents.len();
    let d = latents[0].len();
    let scale = 1.0 / (n as f64 * tau);

    let mut grads = vec![vec![0.0; d]; n];
    for i in 0..n {
        let log_den = log_denominator(&s[i], i, tau);
        let j = partner(i);
        for k in (0..n).filter(|&k| k != i) {
            // dL/ds_ik for the single term anchored at i.
            let p = (s[i][k] / tau - log_den).exp();
            let coeff = scale * (p - if k == j { 1.0 } else { 0.0 });
            if coeff == 0.0 {
                continue;
            }
            let gi = similarity_grad(kind, &latents[i], &latents[k]);
            let gk = similarity_grad(kind, &latents[k], &latents[i]);
            grads[i]
                .iter_mut()
                .zip(&gi)
                .for_each(|(a, b)| *a += coeff * b);
            grads[k]
                .iter_mut()
                .zip(&gk)
                .for_each(|(a, b)| *a += coeff * b);
        }
    }
    Ok((loss, grads))
}
