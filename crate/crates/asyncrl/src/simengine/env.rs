//! Synthetic verifiable tasks.
//!
//! Two built-in task families with exactly checkable answers: modular
//! addition and bit-string parity. A rollout is correct when its final
//! token equals the expected answer token, giving a 0/1 reward with no
//! judge in the loop.

use rand::Rng;
use thiserror::Error;

use crate::config::{DatasetConfig, RunConfig};
use crate::curriculum::{load_prompts_jsonl, CurriculumError, PromptSpec};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("no scorer registered for task `{0}`")]
    UnknownTask(String),
    #[error("prompt `{prompt}` has a bad payload: {reason}")]
    BadPayload { prompt: String, reason: String },
    #[error(transparent)]
    Dataset(#[from] CurriculumError),
}

/// Builds `count` prompts of the named synthetic family. Generation is a
/// pure function of the seed.
pub fn generate_synthetic_prompts(
    kind: &str,
    count: usize,
    seed: u64,
    vocab_size: usize,
) -> Result<Vec<PromptSpec>, EnvError> {
    let mut rng = substream(seed, 4);
    let width = count.to_string().len().max(3);
    let operand_range = (vocab_size as u64 * 6).max(2);
    (0..count)
        .map(|i| match kind {
            "arithmetic" => Ok(PromptSpec {
                id: format!("arith-{i:0width$}"),
                task_id: "arithmetic".into(),
                payload: serde_json::json!({
                    "a": rng.gen_range(0..operand_range),
                    "b": rng.gen_range(0..operand_range),
                }),
            }),
            "parity" => {
                let bits: Vec<u8> = (0..8).map(|_| rng.gen_range(0..=1u8)).collect();
                Ok(PromptSpec {
                    id: format!("parity-{i:0width$}"),
                    task_id: "parity".into(),
                    payload: serde_json::json!({ "bits": bits }),
                })
            }
            other => Err(EnvError::UnknownTask(other.to_string())),
        })
        .collect()
}

/// The token a correct rollout must end with.
pub fn expected_answer(spec: &PromptSpec, vocab_size: usize) -> Result<usize, EnvError> {
    let bad = |reason: &str| EnvError::BadPayload {
        prompt: spec.id.clone(),
        reason: reason.to_string(),
    };
    match spec.task_id.as_str() {
        "arithmetic" => {
            let a = spec.payload["a"].as_u64().ok_or_else(|| bad("missing integer `a`"))?;
            let b = spec.payload["b"].as_u64().ok_or_else(|| bad("missing integer `b`"))?;
            Ok(((a + b) % vocab_size as u64) as usize)
        }
        "parity" => {
            let bits = spec.payload["bits"].as_array().ok_or_else(|| bad("missing array `bits`"))?;
            let mut acc = 0u64;
            for bit in bits {
                acc ^= bit.as_u64().ok_or_else(|| bad("bits must be integers"))? & 1;
            }
            Ok(acc as usize)
        }
        other => Err(EnvError::UnknownTask(other.to_string())),
    }
}

/// Scores a finished token sequence: 1.0 when the last token is the
/// expected answer, 0.0 otherwise.
pub fn score_rollout(spec: &PromptSpec, tokens: &[usize], vocab_size: usize) -> Result<f64, EnvError> {
    let answer = expected_answer(spec, vocab_size)?;
    Ok(if tokens.last() == Some(&answer) { 1.0 } else { 0.0 })
}

/// Resolves the configured prompt source: an explicit JSONL file wins,
/// otherwise the synthetic generator runs with the run seed.
pub fn resolve_prompts(cfg: &RunConfig) -> Result<Vec<PromptSpec>, EnvError> {
    let DatasetConfig { path, synthetic, count } = &cfg.dataset;
    if let Some(path) = path {
        return Ok(load_prompts_jsonl(path)?);
    }
    let kind = synthetic.as_deref().unwrap_or("parity");
    generate_synthetic_prompts(kind, *count, cfg.seed, cfg.policy.vocab_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_answer_is_modular_sum() {
        let spec = PromptSpec {
            id: "arith-000".into(),
            task_id: "arithmetic".into(),
            payload: serde_json::json!({"a": 9, "b": 12}),
        };
        assert_eq!(expected_answer(&spec, 16).unwrap(), 5);
        assert_eq!(score_rollout(&spec, &[1, 2, 5], 16).unwrap(), 1.0);
        assert_eq!(score_rollout(&spec, &[5, 2, 4], 16).unwrap(), 0.0);
    }

    #[test]
    fn parity_answer_is_xor_of_bits() {
        let spec = PromptSpec {
            id: "parity-000".into(),
            task_id: "parity".into(),
            payload: serde_json::json!({"bits": [1, 1, 0, 1]}),
        };
        assert_eq!(expected_answer(&spec, 16).unwrap(), 1);
        assert_eq!(score_rollout(&spec, &[0, 1], 16).unwrap(), 1.0);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = generate_synthetic_prompts("arithmetic", 8, 7, 16).unwrap();
        let b = generate_synthetic_prompts("arithmetic", 8, 7, 16).unwrap();
        let c = generate_synthetic_prompts("arithmetic", 8, 8, 16).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8);
        assert_eq!(a[0].id, "arith-000");
    }

    #[test]
    fn unknown_task_is_an_error() {
        let spec = PromptSpec {
            id: "x".into(),
            task_id: "riddles".into(),
            payload: serde_json::Value::Null,
        };
        assert!(matches!(score_rollout(&spec, &[0], 16), Err(EnvError::UnknownTask(_))));
        assert!(generate_synthetic_prompts("riddles", 1, 0, 16).is_err());
    }
}
