//! Run configuration: a single TOML document carries everything tunable.
//!
//! Flags on the CLI only override; the config file is the source of truth
//! so a run can be reproduced from the file plus a seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simengine::{EngineModel, Mode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Constraint { field: &'static str, reason: String },
}

fn constraint(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub rollout: RolloutConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub curriculum: CurriculumConfig,
    pub policy: PolicyConfig,
    pub engine: EngineModel,
    pub sim: SimConfig,
    pub dataset: DatasetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rollout: RolloutConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            curriculum: CurriculumConfig::default(),
            policy: PolicyConfig::default(),
            engine: EngineModel::default(),
            sim: SimConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

/// Group/batch geometry and the off-policy bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Rollouts per prompt (G).
    pub group_size: usize,
    /// Groups per trainer batch.
    pub prompts_per_batch: usize,
    /// A rollout generated by more than this many distinct policy versions
    /// is discarded.
    pub max_off_policy_steps: usize,
    /// Concurrent group requests kept in flight in continuous mode.
    /// Defaults to `prompts_per_batch` when absent.
    pub pool_capacity: Option<usize>,
    /// What happens to the rest of a group when one member is discarded.
    pub discard_policy: DiscardPolicy,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            prompts_per_batch: 256,
            max_off_policy_steps: 8,
            pool_capacity: None,
            discard_policy: DiscardPolicy::DropGroup,
        }
    }
}

impl RolloutConfig {
    pub fn pool_capacity(&self) -> usize {
        self.pool_capacity.unwrap_or(self.prompts_per_batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardPolicy {
    /// Discard the whole group and let the prompt be resampled later; a
    /// partial group cannot produce a mean-baseline advantage.
    DropGroup,
    /// Keep the group open and regenerate just the discarded rollout.
    RegenerateRollout,
}

/// Masked importance-sampling loss parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Lower edge of the kept ratio interval.
    pub alpha: f64,
    /// Upper edge of the kept ratio interval.
    pub beta: f64,
    /// A rollout with any per-token ratio strictly below this is masked
    /// out entirely.
    pub ratio_guard_threshold: f64,
    /// Whether tokens of guard-masked rollouts still count in the
    /// normalization denominator.
    pub count_masked_in_denominator: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 5.0,
            ratio_guard_threshold: 1e-5,
            count_masked_in_denominator: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub newton_schulz_steps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 0.0,
            newton_schulz_steps: 5,
        }
    }
}

/// Difficulty pools and sampling mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Solve rate at or above which a prompt is classified easy.
    pub easy_threshold: f64,
    /// Solve rate at or below which a prompt is classified hard.
    pub hard_threshold: f64,
    /// Sampling weights for (easy, normal, hard); must sum to 1.
    pub mix_weights: [f64; 3],
    /// Remove a prompt from sampling once a whole group passes.
    pub retire_solved: bool,
    /// Drop constant-reward groups before batching. Off is only useful
    /// for scheduling studies where training content does not matter.
    pub online_filter: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            easy_threshold: 0.8,
            hard_threshold: 0.2,
            mix_weights: [0.25, 0.5, 0.25],
            retire_solved: true,
            online_filter: true,
        }
    }
}

/// Shape of the toy linear-softmax policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub vocab_size: usize,
    pub feature_dim: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            feature_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Scheduling mode; `synchronous`, `async_<k>` or `continuous_inflight`.
    pub mode: Mode,
    /// Stop after this many completed trainer steps.
    pub trainer_steps: u64,
    /// Number of inference clients.
    pub clients: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: Mode::ContinuousInflight,
            trainer_steps: 20,
            clients: 2,
        }
    }
}

/// Where prompts come from: a line-delimited JSON file or a built-in
/// synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Path to a JSONL dataset (one prompt record per line). Takes
    /// precedence over `synthetic` when set.
    pub path: Option<String>,
    /// Built-in generator: `arithmetic` or `parity`.
    pub synthetic: Option<String>,
    /// Number of prompts to generate with the synthetic source.
    pub count: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: Some("parity".to_string()),
            count: 32,
        }
    }
}

impl RunConfig {
    /// Checks every cross-field constraint, naming the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let loss = &self.loss;
        if !(loss.alpha > 0.0 && loss.alpha <= 1.0) {
            return Err(constraint("loss.alpha", format!("must satisfy 0 < alpha <= 1, got {}", loss.alpha)));
        }
        if loss.beta < 1.0 {
            return Err(constraint("loss.beta", format!("must satisfy beta >= 1, got {}", loss.beta)));
        }
        if loss.alpha > loss.beta {
            return Err(constraint(
                "loss.alpha",
                format!("alpha ({}) must not exceed beta ({})", loss.alpha, loss.beta),
            ));
        }
        if !(loss.ratio_guard_threshold >= 0.0 && loss.ratio_guard_threshold.is_finite()) {
            return Err(constraint("loss.ratio_guard_threshold", "must be a finite nonnegative number"));
        }
        if self.rollout.group_size < 2 {
            return Err(constraint("rollout.group_size", "need at least 2 rollouts per prompt for a baseline"));
        }
        if self.rollout.prompts_per_batch == 0 {
            return Err(constraint("rollout.prompts_per_batch", "must be positive"));
        }
        if self.rollout.max_off_policy_steps < 1 {
            return Err(constraint("rollout.max_off_policy_steps", "must be >= 1"));
        }
        if self.rollout.pool_capacity() == 0 {
            return Err(constraint("rollout.pool_capacity", "must be positive"));
        }
        let cur = &self.curriculum;
        if !(0.0..=1.0).contains(&cur.easy_threshold) || !(0.0..=1.0).contains(&cur.hard_threshold) {
            return Err(constraint("curriculum.easy_threshold", "thresholds must lie in [0, 1]"));
        }
        if cur.hard_threshold >= cur.easy_threshold {
            return Err(constraint(
                "curriculum.hard_threshold",
                format!(
                    "hard threshold ({}) must be below easy threshold ({})",
                    cur.hard_threshold, cur.easy_threshold
                ),
            ));
        }
        if cur.mix_weights.iter().any(|w| *w < 0.0) {
            return Err(constraint("curriculum.mix_weights", "weights must be nonnegative"));
        }
        let sum: f64 = cur.mix_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(constraint("curriculum.mix_weights", format!("weights must sum to 1, got {sum}")));
        }
        if self.optimizer.learning_rate < 0.0 {
            return Err(constraint("optimizer.learning_rate", "must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(constraint("optimizer.momentum", "must lie in [0, 1)"));
        }
        if self.optimizer.newton_schulz_steps < 1 {
            return Err(constraint("optimizer.newton_schulz_steps", "must be >= 1"));
        }
        if self.policy.vocab_size < 2 {
            return Err(constraint("policy.vocab_size", "must be >= 2"));
        }
        if self.policy.feature_dim == 0 {
            return Err(constraint("policy.feature_dim", "must be positive"));
        }
        if self.sim.clients == 0 {
            return Err(constraint("sim.clients", "must be positive"));
        }
        if let Mode::Async { k } = self.sim.mode {
            if k < 1 {
                return Err(constraint("sim.mode", "async mode requires k >= 1"));
            }
        }
        self.engine.validate().map_err(|reason| constraint("engine", reason))?;
        if self.dataset.path.is_none() {
            match self.dataset.synthetic.as_deref() {
                Some("parity") | Some("arithmetic") => {}
                Some(other) => {
                    return Err(constraint(
                        "dataset.synthetic",
                        format!("unknown synthetic dataset `{other}` (expected `parity` or `arithmetic`)"),
                    ))
                }
                None => return Err(constraint("dataset.path", "either dataset.path or dataset.synthetic is required")),
            }
            if self.dataset.count == 0 {
                return Err(constraint("dataset.count", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Loads and validates a run configuration, filling defaults for any
/// omitted key.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let config: RunConfig = toml::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().loss.alpha, 0.5);
        assert_eq!(RunConfig::default().loss.beta, 5.0);
    }

    #[test]
    fn accepts_paper_style_values() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [loss]
            alpha = 0.5
            beta = 5.0
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_inverted_alpha_beta() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [loss]
            alpha = 2.0
            beta = 1.0
            "#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("loss.alpha"), "error should name the field: {msg}");
    }

    #[test]
    fn omitted_off_policy_bound_defaults_to_8() {
        let cfg: RunConfig = toml::from_str("seed = 3").unwrap();
        assert_eq!(cfg.rollout.max_off_policy_steps, 8);
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.rollout.group_size = 4;
        cfg.curriculum.mix_weights = [0.5, 0.25, 0.25];
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        assert!(toml::from_str::<RunConfig>("no_such_key = 1").is_err());
    }
}
