//! Shows the Newton-Schulz orthogonalizer pulling the singular values of
//! assorted matrices toward 1 using only matrix multiplies.
//!
//! ```text
//! cargo run --example newton_schulz
//! ```

use asyncrl::rlmath::newton_schulz_orthogonalize;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn show(name: &str, m: &DMatrix<f64>) {
    println!("{name}");
    for steps in [0, 1, 3, 5, 10] {
        let out = if steps == 0 { m.clone() / m.norm() } else { newton_schulz_orthogonalize(m, steps) };
        let sv = singular_values(&out);
        let line: Vec<String> = sv.iter().take(6).map(|s| format!("{s:.4}")).collect();
        println!("  {steps:>2} steps: sv = [{}]", line.join(", "));
    }
    println!();
}

fn main() {
    show("diag(3, 1)", &DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])));

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let gaussian = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
    show("8x8 gaussian", &gaussian);

    let tall = DMatrix::from_fn(12, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    show("12x4 gaussian (tall)", &tall);

    // Scale invariance: the input is Frobenius-normalized first, so a
    // 1000x rescaling changes nothing.
    let a = newton_schulz_orthogonalize(&gaussian, 5);
    let b = newton_schulz_orthogonalize(&(&gaussian * 1000.0), 5);
    println!("scale invariance max deviation: {:.2e}", (&a - &b).amax());
}
