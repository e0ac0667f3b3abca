//! Domain types shared by every module.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("policy weights must be finite")]
    NonFiniteWeights,
    #[error("rollout must contain at least one token")]
    EmptyRollout,
    #[error("token log-probability must be finite and <= 0, got {0}")]
    BadLogProb(f64),
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("group members must share one prompt id")]
    MixedPrompts,
    #[error("group has {got} rollouts, expected {want}")]
    WrongGroupSize { got: usize, want: usize },
    #[error("group size {0} too small for a mean baseline (need >= 2)")]
    GroupTooSmall(usize),
    #[error("advantage count {advantages} does not match token count {tokens}")]
    AdvantageMismatch { advantages: usize, tokens: usize },
}

/// Versioned parameters of the toy policy. The weight matrix maps a
/// per-prompt feature vector (rows) to vocabulary logits (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub version: u64,
    pub weights: DMatrix<f64>,
}

impl PolicyParams {
    pub fn new(version: u64, weights: DMatrix<f64>) -> Result<Self, TypeError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TypeError::NonFiniteWeights);
        }
        Ok(Self { version, weights })
    }

    /// Zero-initialized weights, i.e. a uniform policy at version 0.
    pub fn zeros(feature_dim: usize, vocab_size: usize) -> Self {
        Self {
            version: 0,
            weights: DMatrix::zeros(feature_dim, vocab_size),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.ncols()
    }
}

/// One generated token together with the log-probability it was sampled
/// with and the policy version that emitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: usize,
    pub infer_logprob: f64,
    pub generating_version: u64,
}

impl TokenRecord {
    pub fn new(token_id: usize, infer_logprob: f64, generating_version: u64) -> Result<Self, TypeError> {
        if !infer_logprob.is_finite() || infer_logprob > 0.0 {
            return Err(TypeError::BadLogProb(infer_logprob));
        }
        Ok(Self {
            token_id,
            infer_logprob,
            generating_version,
        })
    }
}

/// A completed, scored sample for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub prompt_id: String,
    pub task_id: String,
    pub tokens: Vec<TokenRecord>,
    pub reward: f64,
    /// Distinct policy versions that contributed tokens; derived from
    /// `tokens` at construction and kept in sync by construction only.
    pub versions_spanned: BTreeSet<u64>,
    pub completed_at: f64,
}

impl Rollout {
    pub fn new(
        prompt_id: impl Into<String>,
        task_id: impl Into<String>,
        tokens: Vec<TokenRecord>,
        reward: f64,
        completed_at: f64,
    ) -> Result<Self, TypeError> {
        if tokens.is_empty() {
            return Err(TypeError::EmptyRollout);
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(TypeError::RewardOutOfRange(reward));
        }
        let versions_spanned = tokens.iter().map(|t| t.generating_version).collect();
        Ok(Self {
            prompt_id: prompt_id.into(),
            task_id: task_id.into(),
            tokens,
            reward,
            versions_spanned,
            completed_at,
        })
    }

    /// Number of distinct policy versions this rollout was generated by.
    pub fn off_policy_age(&self) -> usize {
        self.versions_spanned.len()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// G rollouts sharing one prompt; the unit over which mean-baseline
/// advantages are computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn new(rollouts: Vec<Rollout>, group_size: usize) -> Result<Self, TypeError> {
        if rollouts.len() != group_size {
            return Err(TypeError::WrongGroupSize {
                got: rollouts.len(),
                want: group_size,
            });
        }
        let prompt_id = rollouts[0].prompt_id.clone();
        if rollouts.iter().any(|r| r.prompt_id != prompt_id) {
            return Err(TypeError::MixedPrompts);
        }
        Ok(Self { prompt_id, rollouts })
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    pub fn token_count(&self) -> usize {
        self.rollouts.iter().map(Rollout::token_count).sum()
    }
}

/// Packed, filtered groups plus per-token advantages, ready for one
/// trainer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainBatch {
    pub groups: Vec<RolloutGroup>,
    /// One advantage per token, flattened in (group, rollout, token) order;
    /// every token of a rollout carries that rollout's group-mean advantage.
    pub advantages: Vec<f64>,
    /// Trainer step that will consume this batch.
    pub step_target: u64,
}

impl TrainBatch {
    /// Builds a batch from already-filtered groups, expanding group-mean
    /// advantages to token granularity.
    pub fn assemble(groups: Vec<RolloutGroup>, step_target: u64) -> Result<Self, TypeError> {
        let mut advantages = Vec::new();
        for group in &groups {
            let per_rollout = crate::rlmath::compute_advantages(&group.rewards())?;
            for (rollout, adv) in group.rollouts.iter().zip(per_rollout) {
                advantages.extend(std::iter::repeat(adv).take(rollout.token_count()));
            }
        }
        Ok(Self {
            groups,
            advantages,
            step_target,
        })
    }

    pub fn token_count(&self) -> usize {
        self.groups.iter().map(RolloutGroup::token_count).sum()
    }

    /// Iterates rollouts in the flattening order used by `advantages`.
    pub fn rollouts(&self) -> impl Iterator<Item = &Rollout> {
        self.groups.iter().flat_map(|g| g.rollouts.iter())
    }
}

/// Weight matrices use column-major `DMatrix`; a helper for building one
/// from row slices in tests and examples.
pub fn matrix_from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(id: usize, lp: f64, v: u64) -> TokenRecord {
        TokenRecord::new(id, lp, v).unwrap()
    }

    #[test]
    fn versions_spanned_matches_tokens() {
        let r = Rollout::new(
            "p0",
            "parity",
            vec![tok(1, -0.5, 3), tok(2, -0.1, 4), tok(0, -0.2, 3)],
            1.0,
            10.0,
        )
        .unwrap();
        assert_eq!(r.versions_spanned, BTreeSet::from([3, 4]));
        assert_eq!(r.off_policy_age(), 2);
    }

    #[test]
    fn rollout_rejects_empty_tokens() {
        assert_eq!(
            Rollout::new("p0", "parity", vec![], 0.0, 0.0),
            Err(TypeError::EmptyRollout)
        );
    }

    #[test]
    fn rollout_rejects_out_of_range_reward() {
        let r = Rollout::new("p0", "parity", vec![tok(0, -0.1, 0)], 1.5, 0.0);
        assert_eq!(r, Err(TypeError::RewardOutOfRange(1.5)));
    }

    #[test]
    fn token_rejects_positive_logprob() {
        assert!(TokenRecord::new(0, 0.25, 0).is_err());
    }

    #[test]
    fn group_rejects_mixed_prompts() {
        let a = Rollout::new("p0", "parity", vec![tok(0, -0.1, 0)], 0.0, 0.0).unwrap();
        let b = Rollout::new("p1", "parity", vec![tok(0, -0.1, 0)], 1.0, 0.0).unwrap();
        assert_eq!(RolloutGroup::new(vec![a, b], 2), Err(TypeError::MixedPrompts));
    }

    #[test]
    fn batch_advantage_count_equals_token_count() {
        let a = Rollout::new("p0", "parity", vec![tok(0, -0.1, 0), tok(1, -0.2, 0)], 1.0, 1.0).unwrap();
        let b = Rollout::new("p0", "parity", vec![tok(1, -0.3, 0)], 0.0, 1.0).unwrap();
        let g = RolloutGroup::new(vec![a, b], 2).unwrap();
        let batch = TrainBatch::assemble(vec![g], 1).unwrap();
        assert_eq!(batch.advantages.len(), batch.token_count());
        assert_eq!(batch.advantages, vec![0.5, 0.5, -0.5]);
    }
}
