//! Consistency regularization between a document and its augmentation: KL divergence
//! of the class distributions predicted by the shared projection head.

use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderParams, Gradients};
use crate::error::{Error, Result};

const PROBABILITY_FLOOR: f64 = 1e-12;

/// Probabilities over the head's output categories.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(pub Vec<f64>);

impl ClassDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> ClassDistribution {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ClassDistribution(exps.into_iter().map(|e| e / sum).collect())
}

pub fn predict_distribution(params: &EncoderParams, tokens: &[u32]) -> Result<ClassDistribution> {
    Ok(softmax(&encoder::logits(params, tokens)?))
}

/// `Σ p_k log(p_k / q_k)`, with `q` floored at 1e-12 and `0 log 0 = 0`.
pub fn kl_divergence(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    if p.0.len() != q.0.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {}",
            p.0.len(),
            q.0.len()
        )));
    }
    let kl: f64 =
        p.0.iter()
            .zip(&q.0)
            .filter(|(&pk, _)| pk > 0.0)
            .map(|(&pk, &qk)| pk * (pk / qk.max(PROBABILITY_FLOOR)).ln())
            .sum();
    Ok(kl.max(0.0))
}

/// A document and its augmented counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UdaPair {
    pub original: Vec<u32>,
    pub augmented: Vec<u32>,
    pub doc_id: String,
    pub route: String,
    pub seed: u64,
}

/// Whether gradient flows through the clean-side distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `p(y|x)` is treated as a constant target.
    Frozen,
    /// Both branches receive gradient.
    #[default]
    Live,
}

fn check_pairs(pairs: &[UdaPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidBatch("no consistency pairs".into()));
    }
    if pairs
        .iter()
        .any(|p| p.original.is_empty() || p.augmented.is_empty())
    {
        return Err(Error::EmptyTokens);
    }
    Ok(())
}

/// Unnormalized sum of `KL(p(y|x) ‖ p(y|x'))` over the pairs.
pub fn uda_batch_loss(params: &EncoderParams, pairs: &[UdaPair]) -> Result<f64> {
    check_pairs(pairs)?;
    let mut total = 0.0;
    for pair in pairs {
        let p = predict_distribution(params, &pair.original)?;
        let q = predict_distribution(params, &pair.augmented)?;
        total += kl_divergence(&p, &q)?;
    }
    Ok(total)
}

/// Loss and gradient of [`uda_batch_loss`].
///
/// On the augmented branch `dKL/dz' = p' − p`. With [`TargetMode::Live`] the clean branch
/// also receives `dKL/dz = p ⊙ (log p − log p' − KL)`.
pub fn uda_backward(
    params: &EncoderParams,
    pairs: &[UdaPair],
    mode: TargetMode,
) -> Result<(f64, Gradients)> {
    check_pairs(pairs)?;
    let dims = params.dims();
    let zero_latent = vec![0.0; dims.latent];
    let mut grads = Gradients::zeros(dims);
    let mut total = 0.0;
    for pair in pairs {
        let clean = encoder::forward(params, &pair.original);
        let aug = encoder::forward(params, &pair.augmented)?;
        let clean = clean?;
        let p = softmax(&clean.logits);
        let q = softmax(&aug.logits);
        let kl = kl_divergence(&p, &q)?;
        total += kl;

        let dz_aug: Vec<f64> = q.0.iter().zip(&p.0).map(|(qk, pk)| qk - pk).collect();
        encoder::accumulate_backward(params, &aug, &zero_latent, Some(&dz_aug), &mut grads)?;

        if mode == TargetMode::Live {
            let dz_clean: Vec<f64> =
                p.0.iter()
                    .zip(&q.0)
                    .map(|(&pk, &qk)| {
                        if pk > 0.0 {
                            pk * (pk.ln() - qk.max(PROBABILITY_FLOOR).ln() - kl)
                        } else {
                            0.0
                        }
                    })
                    .collect();
            encoder::accumulate_backward(
                params,
                &clean,
                &zero_latent,
                Some(&dz_clean),
                &mut grads,
            )?;
        }
    }
    Ok((total, grads))
}

/// Combined objective with unit weights.
pub fn total_loss(contrastive: f64, consistency: f64) -> Result<f64> {
    if !contrastive.is_finite() || !consistency.is_finite() {
        return Err(Error::NonFinite("loss terms"));
    }
    Ok(contrastive + consistency)
}
