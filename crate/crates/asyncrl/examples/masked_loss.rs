//! Walks through the masked importance-sampling loss on a tiny
//! hand-built batch: which ratios are kept, which tokens are masked, and
//! when the per-rollout guard zeroes a whole sample.
//!
//! ```text
//! cargo run --example masked_loss
//! ```

use asyncrl::config::LossConfig;
use asyncrl::rlmath::{icepop_loss, mask_ratio};
use asyncrl::types::{Rollout, RolloutGroup, TokenRecord, TrainBatch};

fn rollout(prompt: &str, n: usize, reward: f64) -> Rollout {
    let tokens = (0..n).map(|i| TokenRecord::new(i, -1.0, 0).expect("valid token")).collect();
    Rollout::new(prompt, "parity", tokens, reward, 0.0).expect("valid rollout")
}

fn main() {
    let cfg = LossConfig::default();
    println!("kept ratio interval [{}, {}]", cfg.alpha, cfg.beta);
    for k in [0.2, 0.5, 1.0, 4.9, 5.0, 5.1] {
        println!("  mask({k:>4}) = {}", mask_ratio(k, cfg.alpha, cfg.beta));
    }

    // One group of four 3-token rollouts, rewards [1, 1, 0, 0], so the
    // advantages are +0.5, +0.5, -0.5, -0.5 on every token.
    let group = RolloutGroup::new(
        vec![
            rollout("p", 3, 1.0),
            rollout("p", 3, 1.0),
            rollout("p", 3, 0.0),
            rollout("p", 3, 0.0),
        ],
        4,
    )
    .expect("valid group");
    let batch = TrainBatch::assemble(vec![group], 1).expect("valid batch");

    // Trainer log-probabilities are written as infer + ln(ratio), so the
    // ratio per token is explicit. The second rollout drifts above beta
    // on one token; the fourth trips the 1e-5 guard and is zeroed whole.
    let ratios: [f64; 12] = [1.0, 1.1, 0.9, 1.0, 7.0, 1.0, 0.8, 1.0, 1.2, 1.0, 1e-6, 1.0];
    let train: Vec<f64> = ratios.iter().map(|r| -1.0 + r.ln()).collect();

    let report = icepop_loss(&batch, &train, &cfg).expect("aligned batch");
    println!("\nper-token ratio -> weight (advantage-scaled, 0 = masked):");
    for (i, (r, w)) in ratios.iter().zip(&report.per_token_weight).enumerate() {
        println!("  token {i:>2}: k = {r:<8} weight = {w}");
    }
    println!(
        "\nloss {:.6}, masked tokens {}, guarded rollouts {}",
        report.loss_value, report.masked_token_count, report.guarded_rollout_count
    );
}
