//! Round-trips a simulation trace through its line-delimited JSON form
//! and derives the throughput report from the file alone.
//!
//! ```text
//! cargo run --example trace_report
//! ```

use asyncrl::config::RunConfig;
use asyncrl::metrics::{off_policy_age_histogram, throughput_report};
use asyncrl::simengine::{run_schedule, RolloutLength};
use asyncrl::trace::SimTrace;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.seed = 9;
    cfg.sim.trainer_steps = 10;
    cfg.rollout.group_size = 4;
    cfg.rollout.prompts_per_batch = 4;
    cfg.engine.rollout_length =
        RolloutLength::LogNormal { median_tokens: 12.0, sigma: 1.0, max_tokens: 128 };
    cfg.validate().expect("config is valid");

    let outcome = run_schedule(&cfg).expect("simulation runs");
    let dir = std::env::temp_dir().join("asyncrl-trace-report");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("trace.jsonl");
    outcome.trace.save(&path).expect("trace writes");

    let reloaded = SimTrace::load(&path).expect("trace parses");
    reloaded.validate().expect("trace is well formed");
    assert_eq!(reloaded, outcome.trace);
    println!("{} events round-tripped through {}", reloaded.events.len(), path.display());

    let report = throughput_report(&reloaded);
    println!("\n{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    println!(
        "\noff-policy age histogram: {:?}",
        off_policy_age_histogram(&reloaded)
    );
}
