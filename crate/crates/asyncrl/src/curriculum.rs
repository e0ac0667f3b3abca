//! Difficulty-aware prompt selection.
//!
//! Every prompt carries a running solve rate. Prompts are partitioned
//! into easy, normal, and hard pools by thresholds on that rate, batches
//! are drawn with a configurable mix over the pools, groups whose rewards
//! carry no training signal are filtered out, and prompts a whole group
//! solves can be retired from further sampling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::CurriculumConfig;
use crate::types::RolloutGroup;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("cannot access dataset file: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset contains no prompts")]
    Empty,
    #[error("duplicate prompt id `{0}`")]
    DuplicateId(String),
    #[error("result for unknown prompt id `{0}`")]
    UnknownPrompt(String),
}

/// One task prompt. The payload is task-specific JSON the scorer knows
/// how to read (operands, bit strings, and so on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub task_id: String,
    pub payload: serde_json::Value,
}

/// Reads a line-delimited JSON dataset, one prompt per line.
pub fn load_prompts_jsonl(path: impl AsRef<Path>) -> Result<Vec<PromptSpec>, CurriculumError> {
    let file = std::fs::File::open(path)?;
    let mut prompts = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec = serde_json::from_str(&line)
            .map_err(|source| CurriculumError::Malformed { line: idx + 1, source })?;
        prompts.push(spec);
    }
    if prompts.is_empty() {
        return Err(CurriculumError::Empty);
    }
    Ok(prompts)
}

pub fn save_prompts_jsonl(prompts: &[PromptSpec], path: impl AsRef<Path>) -> Result<(), CurriculumError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    for spec in prompts {
        let line = serde_json::to_string(spec).expect("prompt serializes");
        writeln!(buf, "{line}")?;
    }
    buf.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Easy,
    Normal,
    Hard,
}

/// Thresholds are inclusive on both ends: a rate exactly at the easy
/// threshold is easy, exactly at the hard threshold is hard. A prompt
/// with no attempts yet has no rate and sits in the normal pool.
pub fn classify_difficulty(stats: &PromptStats, cfg: &CurriculumConfig) -> Pool {
    match stats.solve_rate() {
        None => Pool::Normal,
        Some(rate) if rate >= cfg.easy_threshold => Pool::Easy,
        Some(rate) if rate <= cfg.hard_threshold => Pool::Hard,
        Some(_) => Pool::Normal,
    }
}

/// Running outcome counts for one prompt.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptStats {
    pub attempts: u64,
    /// Sum of rewards over all attempts; with 0/1 rewards this is the
    /// number of solves.
    pub reward_sum: f64,
    pub retired: bool,
}

impl PromptStats {
    pub fn solve_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.reward_sum / self.attempts as f64)
    }
}

/// Full sampler state: the prompt set plus per-prompt statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    prompts: BTreeMap<String, PromptSpec>,
    stats: BTreeMap<String, PromptStats>,
}

impl CurriculumState {
    pub fn new(prompts: Vec<PromptSpec>) -> Result<Self, CurriculumError> {
        if prompts.is_empty() {
            return Err(CurriculumError::Empty);
        }
        let mut map = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for spec in prompts {
            stats.insert(spec.id.clone(), PromptStats::default());
            if map.insert(spec.id.clone(), spec.clone()).is_some() {
                return Err(CurriculumError::DuplicateId(spec.id));
            }
        }
        Ok(Self { prompts: map, stats })
    }

    pub fn prompt(&self, id: &str) -> Option<&PromptSpec> {
        self.prompts.get(id)
    }

    pub fn stats(&self, id: &str) -> Option<&PromptStats> {
        self.stats.get(id)
    }

    pub fn pool_of(&self, id: &str, cfg: &CurriculumConfig) -> Option<Pool> {
        self.stats.get(id).map(|s| classify_difficulty(s, cfg))
    }

    /// Active (non-retired) prompt ids per pool, in sorted id order.
    pub fn pools(&self, cfg: &CurriculumConfig) -> BTreeMap<Pool, Vec<String>> {
        let mut pools: BTreeMap<Pool, Vec<String>> =
            [Pool::Easy, Pool::Normal, Pool::Hard].map(|p| (p, Vec::new())).into();
        for (id, stats) in &self.stats {
            if !stats.retired {
                pools.get_mut(&classify_difficulty(stats, cfg)).unwrap().push(id.clone());
            }
        }
        pools
    }

    pub fn retired_count(&self) -> usize {
        self.stats.values().filter(|s| s.retired).count()
    }

    pub fn active_count(&self) -> usize {
        self.stats.values().filter(|s| !s.retired).count()
    }

    /// Draws up to `n` distinct prompts. Each draw picks a pool by the
    /// configured mix, renormalized over the pools that still have
    /// prompts, then picks uniformly inside the pool. Returns fewer than
    /// `n` only when the active set is exhausted.
    pub fn sample_prompts(
        &self,
        cfg: &CurriculumConfig,
        n: usize,
        rng: &mut impl Rng,
    ) -> Vec<PromptSpec> {
        let mut pools = self.pools(cfg);
        let weight_of = |pool: Pool| match pool {
            Pool::Easy => cfg.mix_weights[0],
            Pool::Normal => cfg.mix_weights[1],
            Pool::Hard => cfg.mix_weights[2],
        };
        let mut picked = Vec::with_capacity(n);
        for _ in 0..n {
            let live: Vec<Pool> = pools
                .iter()
                .filter(|(_, ids)| !ids.is_empty())
                .map(|(p, _)| *p)
                .collect();
            let total: f64 = live.iter().map(|p| weight_of(*p)).sum();
            if live.is_empty() {
                break;
            }
            let pool = if total > 0.0 {
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = live[live.len() - 1];
                for p in &live {
                    u -= weight_of(*p);
                    if u < 0.0 {
                        chosen = *p;
                        break;
                    }
                }
                chosen
            } else {
                // All live pools have zero weight; fall back to uniform.
                live[rng.gen_range(0..live.len())]
            };
            let ids = pools.get_mut(&pool).unwrap();
            let id = ids.swap_remove(rng.gen_range(0..ids.len()));
            picked.push(self.prompts[&id].clone());
        }
        picked
    }

    /// Folds one finished group into the prompt's statistics. When every
    /// rollout in the group passed and retirement is enabled, the prompt
    /// leaves the sampling set. Returns whether this group retired it.
    pub fn record_group(
        &mut self,
        group: &RolloutGroup,
        cfg: &CurriculumConfig,
    ) -> Result<bool, CurriculumError> {
        let stats = self
            .stats
            .get_mut(&group.prompt_id)
            .ok_or_else(|| CurriculumError::UnknownPrompt(group.prompt_id.clone()))?;
        let rewards = group.rewards();
        stats.attempts += rewards.len() as u64;
        stats.reward_sum += rewards.iter().sum::<f64>();
        let retired_now = cfg.retire_solved && !stats.retired && rewards.iter().all(|r| *r == 1.0);
        if retired_now {
            stats.retired = true;
        }
        Ok(retired_now)
    }
}

/// Drops groups whose rewards are all identical: with a mean baseline
/// their advantages are exactly zero, so they contribute nothing but
/// denominator mass. Returns the surviving groups and the dropped count.
pub fn online_filter(groups: Vec<RolloutGroup>) -> (Vec<RolloutGroup>, usize) {
    let before = groups.len();
    let kept: Vec<RolloutGroup> = groups
        .into_iter()
        .filter(|g| {
            let rewards = g.rewards();
            rewards.iter().any(|r| *r != rewards[0])
        })
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Rollout, RolloutGroup, TokenRecord};

    fn cfg() -> CurriculumConfig {
        CurriculumConfig::default()
    }

    fn spec(id: &str) -> PromptSpec {
        PromptSpec {
            id: id.into(),
            task_id: "parity".into(),
            payload: serde_json::json!({"bits": [1, 0, 1]}),
        }
    }

    fn group(prompt: &str, rewards: &[f64]) -> RolloutGroup {
        let rollouts = rewards
            .iter()
            .map(|&r| {
                Rollout::new(prompt, "parity", vec![TokenRecord::new(0, -0.5, 0).unwrap()], r, 0.0)
                    .unwrap()
            })
            .collect();
        RolloutGroup::new(rollouts, rewards.len()).unwrap()
    }

    fn state_with_rates(rates: &[(&str, u64, f64)]) -> CurriculumState {
        let mut state = CurriculumState::new(rates.iter().map(|(id, _, _)| spec(id)).collect()).unwrap();
        for (id, attempts, rate) in rates {
            let s = state.stats.get_mut(*id).unwrap();
            s.attempts = *attempts;
            s.reward_sum = *attempts as f64 * rate;
        }
        state
    }

    #[test]
    fn threshold_boundaries_are_inclusive() {
        let c = cfg();
        let mk = |attempts, rate: f64| PromptStats {
            attempts,
            reward_sum: attempts as f64 * rate,
            retired: false,
        };
        assert_eq!(classify_difficulty(&mk(10, 0.8), &c), Pool::Easy);
        assert_eq!(classify_difficulty(&mk(10, 0.79), &c), Pool::Normal);
        assert_eq!(classify_difficulty(&mk(10, 0.2), &c), Pool::Hard);
        assert_eq!(classify_difficulty(&mk(10, 0.21), &c), Pool::Normal);
        assert_eq!(classify_difficulty(&mk(0, 0.0), &c), Pool::Normal);
    }

    #[test]
    fn sampling_respects_mix_and_renormalizes() {
        let state = state_with_rates(&[("easy-0", 10, 1.0), ("hard-0", 10, 0.0), ("hard-1", 10, 0.1)]);
        let c = CurriculumConfig { mix_weights: [0.25, 0.5, 0.25], ..cfg() };
        // Normal pool is empty, so the effective mix is (0.5, 0.5) over
        // easy and hard. Count easy draws over many single-prompt samples.
        let mut rng = crate::rng::seeded_rng(17);
        let n = 4000;
        let easy = (0..n)
            .filter(|_| state.sample_prompts(&c, 1, &mut rng)[0].id == "easy-0")
            .count();
        let frac = easy as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.03, "easy fraction {frac}");
    }

    #[test]
    fn sampling_is_distinct_within_a_call() {
        let state = state_with_rates(&[("a", 0, 0.0), ("b", 0, 0.0), ("c", 0, 0.0)]);
        let mut rng = crate::rng::seeded_rng(3);
        let drawn = state.sample_prompts(&cfg(), 8, &mut rng);
        let mut ids: Vec<&str> = drawn.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn online_filter_drops_constant_groups() {
        let groups = vec![
            group("p0", &[1.0, 1.0, 1.0, 1.0]),
            group("p1", &[1.0, 0.0, 1.0, 0.0]),
            group("p2", &[0.0, 0.0, 0.0, 0.0]),
        ];
        let (kept, dropped) = online_filter(groups);
        assert_eq!(dropped, 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].prompt_id, "p1");
    }

    #[test]
    fn solved_group_retires_prompt() {
        let mut state = state_with_rates(&[("p0", 0, 0.0), ("p1", 0, 0.0)]);
        state.record_group(&group("p0", &[1.0, 1.0]), &cfg()).unwrap();
        assert!(state.stats("p0").unwrap().retired);
        assert_eq!(state.active_count(), 1);

        let mut rng = crate::rng::seeded_rng(0);
        for _ in 0..20 {
            for s in state.sample_prompts(&cfg(), 2, &mut rng) {
                assert_ne!(s.id, "p0");
            }
        }
    }

    #[test]
    fn retirement_can_be_disabled() {
        let c = CurriculumConfig { retire_solved: false, ..cfg() };
        let mut state = state_with_rates(&[("p0", 0, 0.0)]);
        state.record_group(&group("p0", &[1.0, 1.0]), &c).unwrap();
        assert!(!state.stats("p0").unwrap().retired);
    }

    #[test]
    fn solve_rate_accumulates_across_groups() {
        let mut state = state_with_rates(&[("p0", 0, 0.0)]);
        let c = cfg();
        state.record_group(&group("p0", &[1.0, 0.0]), &c).unwrap();
        state.record_group(&group("p0", &[0.0, 0.0]), &c).unwrap();
        assert_eq!(state.stats("p0").unwrap().solve_rate(), Some(0.25));
        assert_eq!(state.pool_of("p0", &c), Some(Pool::Normal));
        state.record_group(&group("p0", &[0.0, 0.0]), &c).unwrap();
        assert_eq!(state.stats("p0").unwrap().solve_rate(), Some(1.0 / 6.0));
        assert_eq!(state.pool_of("p0", &c), Some(Pool::Hard));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prompts.jsonl");
        let prompts = vec![spec("p0"), spec("p1")];
        save_prompts_jsonl(&prompts, &path).unwrap();
        assert_eq!(load_prompts_jsonl(&path).unwrap(), prompts);
    }

    #[test]
    fn malformed_dataset_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"p0\",\"task_id\":\"parity\",\"payload\":{}}\n{oops\n").unwrap();
        assert!(matches!(
            load_prompts_jsonl(&path),
            Err(CurriculumError::Malformed { line: 2, .. })
        ));
    }
}
