//! Expert load imbalance measured as the relative excess of the busiest
//! worker over the mean, on a synthetic router with adjustable skew.
//!
//! ```text
//! cargo run --example load_balance
//! ```

use asyncrl::metrics::max_violation;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

fn main() {
    // Hand-checkable fixtures first.
    for loads in [vec![4.0, 4.0, 4.0, 4.0], vec![1.0, 2.0, 3.0, 6.0], vec![8.0, 0.0, 0.0, 0.0]] {
        let v = max_violation(&loads).expect("valid loads");
        println!("loads {loads:?} -> violation {v}");
    }

    // A router over 16 experts: tokens pick expert e with probability
    // proportional to skew^e. skew 1 is uniform.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let experts = 16;
    let tokens = 200_000;
    println!("\n{:>6} {:>12}", "skew", "violation");
    for skew in [1.0, 1.05, 1.1, 1.2, 1.4f64] {
        let weights: Vec<f64> = (0..experts).map(|e| skew.powi(e)).collect();
        let total: f64 = weights.iter().sum();
        let mut loads = vec![0.0; experts as usize];
        for _ in 0..tokens {
            let mut u = rng.gen::<f64>() * total;
            for (e, w) in weights.iter().enumerate() {
                u -= w;
                if u < 0.0 {
                    loads[e] += 1.0;
                    break;
                }
            }
        }
        println!("{:>6.2} {:>12.4}", skew, max_violation(&loads).expect("valid loads"));
    }
}
