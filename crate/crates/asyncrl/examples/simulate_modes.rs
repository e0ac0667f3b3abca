//! Runs the same workload under all three scheduling modes and compares
//! throughput, inference idle time, and rollout staleness.
//!
//! ```text
//! cargo run --example simulate_modes
//! ```

use asyncrl::config::RunConfig;
use asyncrl::metrics::{off_policy_age_histogram, throughput_report};
use asyncrl::simengine::{run_schedule, Mode, RolloutLength};

fn base_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 5;
    cfg.sim.trainer_steps = 25;
    cfg.sim.clients = 4;
    cfg.rollout.group_size = 4;
    cfg.rollout.prompts_per_batch = 8;
    cfg.engine.rollout_length =
        RolloutLength::LogNormal { median_tokens: 16.0, sigma: 1.0, max_tokens: 256 };
    cfg.engine.trainer_step_time = 0.15;
    cfg.dataset.count = 64;
    cfg
}

fn main() {
    println!("{:<22} {:>12} {:>10} {:>10} {:>9}", "mode", "tokens/s", "idle", "discards", "max age");
    for mode in [Mode::Synchronous, Mode::Async { k: 1 }, Mode::ContinuousInflight] {
        let mut cfg = base_config();
        cfg.sim.mode = mode;
        cfg.validate().expect("config is valid");
        let outcome = run_schedule(&cfg).expect("simulation runs");
        let report = throughput_report(&outcome.trace);
        let max_age = off_policy_age_histogram(&outcome.trace).keys().max().copied().unwrap_or(0);
        println!(
            "{:<22} {:>12.1} {:>10.3} {:>10} {:>9}",
            mode.to_string(),
            report.tokens_per_second,
            report.mean_idle_fraction,
            report.discarded_rollouts,
            max_age,
        );
    }
}
