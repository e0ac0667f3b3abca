//! Toy linear-softmax policy.
//!
//! Each prompt gets a fixed feature vector; logits are `features * W` and
//! token probabilities come from a softmax over the vocabulary. Log
//! probabilities and gradients are closed-form, which is the point: the
//! loss and optimizer can be verified exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{fnv1a64, substream};
use crate::types::PolicyParams;

use super::loss::MathError;

/// Deterministic per-prompt feature vector: unit-norm Gaussian, seeded
/// from the prompt id so the same prompt always maps to the same features.
pub fn prompt_features(prompt_id: &str, feature_dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = substream(seed ^ fnv1a64(prompt_id.as_bytes()), 0);
    let mut v = DVector::from_fn(feature_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Caches nothing; a cheap handle bundling the feature geometry so batch
/// code does not thread dimensions and seeds everywhere.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    pub feature_dim: usize,
    pub seed: u64,
}

impl FeatureSource {
    pub fn new(feature_dim: usize, seed: u64) -> Self {
        Self { feature_dim, seed }
    }

    pub fn features(&self, prompt_id: &str) -> DVector<f64> {
        prompt_features(prompt_id, self.feature_dim, self.seed)
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.map(|l| l - log_sum)
}

fn logits(params: &PolicyParams, features: &DVector<f64>) -> Result<DVector<f64>, MathError> {
    if features.len() != params.feature_dim() {
        return Err(MathError::DimensionMismatch {
            expected: params.feature_dim(),
            got: features.len(),
        });
    }
    Ok(params.weights.tr_mul(features))
}

/// Log-probabilities of the given token sequence, one per token. The toy
/// policy is position-independent: every position of a prompt shares the
/// same distribution.
pub fn policy_logprobs(
    params: &PolicyParams,
    features: &DVector<f64>,
    tokens: &[usize],
) -> Result<Vec<f64>, MathError> {
    let lsm = log_softmax(&logits(params, features)?);
    tokens
        .iter()
        .map(|&t| {
            lsm.get(t)
                .copied()
                .ok_or(MathError::TokenOutOfVocab { token: t, vocab: lsm.len() })
        })
        .collect()
}

/// Full token distribution for a prompt.
pub fn token_distribution(params: &PolicyParams, features: &DVector<f64>) -> Result<Vec<f64>, MathError> {
    Ok(log_softmax(&logits(params, features)?).iter().map(|lp| lp.exp()).collect())
}

/// Samples one token by inverse CDF; returns the token and its
/// log-probability under `params`.
pub fn sample_token(
    params: &PolicyParams,
    features: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<(usize, f64), MathError> {
    let lsm = log_softmax(&logits(params, features)?);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let last = lsm.len() - 1;
    for (i, lp) in lsm.iter().enumerate() {
        acc += lp.exp();
        if u < acc || i == last {
            return Ok((i, *lp));
        }
    }
    unreachable!()
}

/// Gradient of `log p(token)` with respect to the weight matrix:
/// `features ⊗ (onehot(token) - probs)`.
pub fn logprob_gradient(
    params: &PolicyParams,
    features: &DVector<f64>,
    token: usize,
) -> Result<DMatrix<f64>, MathError> {
    let lsm = log_softmax(&logits(params, features)?);
    if token >= lsm.len() {
        return Err(MathError::TokenOutOfVocab { token, vocab: lsm.len() });
    }
    let mut delta = DVector::from_iterator(lsm.len(), lsm.iter().map(|lp| -lp.exp()));
    delta[token] += 1.0;
    Ok(features * delta.transpose())
}
