//! Shows prompts migrating between difficulty pools as their solve
//! rates evolve, and retirement once a whole group passes.
//!
//! ```text
//! cargo run --example curriculum_pools
//! ```

use asyncrl::config::CurriculumConfig;
use asyncrl::curriculum::{CurriculumState, Pool, PromptSpec};
use asyncrl::types::{Rollout, RolloutGroup, TokenRecord};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

fn group(prompt: &str, rewards: &[f64]) -> RolloutGroup {
    let rollouts = rewards
        .iter()
        .map(|&r| {
            let token = TokenRecord::new(0, -0.5, 0).expect("valid token");
            Rollout::new(prompt, "parity", vec![token], r, 0.0).expect("valid rollout")
        })
        .collect();
    RolloutGroup::new(rollouts, rewards.len()).expect("valid group")
}

fn pool_sizes(state: &CurriculumState, cfg: &CurriculumConfig) -> (usize, usize, usize) {
    let pools = state.pools(cfg);
    (pools[&Pool::Easy].len(), pools[&Pool::Normal].len(), pools[&Pool::Hard].len())
}

fn main() {
    let cfg = CurriculumConfig::default();
    // Eight prompts with different hidden success probabilities; the
    // sampler only ever sees their observed solve rates.
    let true_rates = [0.95, 0.9, 0.6, 0.5, 0.4, 0.1, 0.05, 0.0];
    let prompts: Vec<PromptSpec> = (0..true_rates.len())
        .map(|i| PromptSpec {
            id: format!("p{i}"),
            task_id: "parity".into(),
            payload: serde_json::Value::Null,
        })
        .collect();
    let mut state = CurriculumState::new(prompts).expect("nonempty prompt set");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);

    println!("{:>6} {:>6} {:>7} {:>6} {:>8}", "round", "easy", "normal", "hard", "retired");
    for round in 0..10 {
        let (e, n, h) = pool_sizes(&state, &cfg);
        println!("{:>6} {:>6} {:>7} {:>6} {:>8}", round, e, n, h, state.retired_count());
        for (i, rate) in true_rates.iter().enumerate() {
            let id = format!("p{i}");
            if state.stats(&id).map(|s| s.retired).unwrap_or(true) {
                continue;
            }
            let rewards: Vec<f64> =
                (0..8).map(|_| if rng.gen::<f64>() < *rate { 1.0 } else { 0.0 }).collect();
            state.record_group(&group(&id, &rewards), &cfg).expect("known prompt");
        }
    }

    println!("\nfinal classification:");
    for i in 0..true_rates.len() {
        let id = format!("p{i}");
        let stats = state.stats(&id).expect("known prompt");
        println!(
            "  {id}: solve rate {:.2} -> {:?}{}",
            stats.solve_rate().unwrap_or(0.0),
            state.pool_of(&id, &cfg).expect("known prompt"),
            if stats.retired { " (retired)" } else { "" }
        );
    }
}
