//! Trains the toy linear-softmax policy on modular addition with
//! continuous batching and in-flight weight updates, then prints the
//! learning curve.
//!
//! ```text
//! cargo run --release --example train_arithmetic
//! ```

use asyncrl::config::load_config;
use asyncrl::simengine::train_toy_policy;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference_arithmetic.toml");
    let cfg = load_config(path).expect("reference config is valid");
    let outcome = train_toy_policy(&cfg).expect("training runs");

    println!("{:>5} {:>12} {:>12} {:>8} {:>9}", "step", "mean_reward", "loss", "masked", "discards");
    for point in &outcome.curve {
        if point.step % 5 == 0 || point.step == 1 {
            println!(
                "{:>5} {:>12.4} {:>12.5} {:>8.3} {:>9}",
                point.step, point.mean_reward, point.loss, point.masked_token_fraction, point.discard_count
            );
        }
    }
    let last = outcome.curve.last().expect("curve has points");
    println!(
        "\nfinal mean reward {:.3} after {} steps (policy version {})",
        last.mean_reward,
        outcome.completed_steps,
        outcome.final_params.version
    );
}
