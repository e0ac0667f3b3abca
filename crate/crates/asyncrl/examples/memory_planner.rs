//! Activation-memory budgets for growing context lengths: the reason
//! long-context training needs its memory planned up front.
//!
//! ```text
//! cargo run --example memory_planner
//! ```

use asyncrl::metrics::{activation_memory, format_bytes};

fn main() {
    let layers = 46;
    let hidden = 4096;
    let bytes_per_element = 2; // bf16

    println!("{layers} layers, hidden {hidden}, {bytes_per_element} bytes/element\n");
    println!("{:>10} {:>18} {:>12} {:>12}", "seq_len", "bytes", "decimal", "binary");
    for seq_len in [4_096, 16_384, 48_000, 131_072] {
        let plan = activation_memory(layers, seq_len, hidden, bytes_per_element)
            .expect("dimensions fit");
        println!(
            "{:>10} {:>18} {:>12} {:>12}",
            seq_len,
            plan.total_bytes,
            format_bytes(plan.total_bytes, false),
            format_bytes(plan.total_bytes, true)
        );
    }
}
