//! Randomized invariants over the math kernel, the orchestrator
//! plumbing, and the scheduling simulation.

use asyncrl::config::RunConfig;
use asyncrl::curriculum::PromptSpec;
use asyncrl::orchestrator::{dispatch_round_robin, enforce_off_policy_bound, PoolState};
use asyncrl::rlmath::{compute_advantages, mask_ratio, newton_schulz_orthogonalize};
use asyncrl::simengine::{run_schedule, Mode, RolloutLength};
use asyncrl::trace::SimEventKind;
use asyncrl::types::{Rollout, TokenRecord};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn prompt(i: usize) -> PromptSpec {
    PromptSpec { id: format!("p{i}"), task_id: "t".into(), payload: serde_json::Value::Null }
}

proptest! {
    #[test]
    fn advantages_are_centered_and_linear(
        rewards in prop::collection::vec(0.0f64..=1.0, 2..32),
        scale in 0.1f64..10.0,
    ) {
        let adv = compute_advantages(&rewards).unwrap();
        let total: f64 = adv.iter().sum();
        prop_assert!(total.abs() <= 1e-12);

        let scaled: Vec<f64> = rewards.iter().map(|r| r * scale).collect();
        let adv_scaled = compute_advantages(&scaled).unwrap();
        for (a, b) in adv.iter().zip(&adv_scaled) {
            prop_assert!((a * scale - b).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn mask_is_identity_inside_and_zero_outside(
        k in 0.0f64..20.0,
        alpha in 0.01f64..1.0,
        width in 0.01f64..10.0,
    ) {
        let beta = alpha + width;
        let masked = mask_ratio(k, alpha, beta);
        if (alpha..=beta).contains(&k) {
            prop_assert_eq!(masked, k);
        } else {
            prop_assert_eq!(masked, 0.0);
        }
    }

    #[test]
    fn orthogonalization_ignores_input_scale(
        rows in 2usize..10,
        cols in 2usize..10,
        seed in 0u64..1000,
        scale in 0.001f64..1000.0,
    ) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let a = newton_schulz_orthogonalize(&g, 5);
        let b = newton_schulz_orthogonalize(&(&g * scale), 5);
        prop_assert!((a - b).norm() <= 1e-8);
    }

    #[test]
    fn round_robin_dispatch_is_fair(
        clients in 1usize..32,
        start in 0u64..1000,
        window in 1u64..500,
    ) {
        let mut counts = vec![0u64; clients];
        for seq in start..start + window {
            counts[dispatch_round_robin(seq, clients)] += 1;
        }
        let max = counts.iter().max().unwrap();
        let min = counts.iter().min().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn pool_never_exceeds_capacity(
        capacity in 1usize..16,
        ops in prop::collection::vec(any::<bool>(), 1..100),
    ) {
        let mut pool = PoolState::new(capacity);
        let mut i = 0usize;
        for admit in ops {
            if admit && pool.vacancies() > 0 {
                pool.admit(prompt(i), 4);
                i += 1;
            } else {
                let seq = pool.in_flight().next().map(|t| t.request_seq);
                if let Some(seq) = seq {
                    pool.complete(seq);
                }
            }
            prop_assert!(pool.in_flight().count() <= capacity);
            prop_assert_eq!(pool.vacancies(), capacity - pool.in_flight().count());
        }
        let admitted = pool.refill((0..100).map(|j| prompt(1000 + j)), 4);
        prop_assert_eq!(pool.in_flight().count(), capacity);
        prop_assert!(admitted.len() <= capacity);
    }

    #[test]
    fn off_policy_partition_is_exhaustive_and_inclusive(
        spans in prop::collection::vec(1usize..12, 1..40),
        bound in 1usize..12,
    ) {
        let rollouts: Vec<Rollout> = spans
            .iter()
            .enumerate()
            .map(|(i, span)| {
                let tokens: Vec<TokenRecord> = (0..*span)
                    .map(|v| TokenRecord::new(0, -1.0, v as u64).unwrap())
                    .collect();
                Rollout::new(format!("p{i}"), "t", tokens, 0.0, 0.0).unwrap()
            })
            .collect();
        let total = rollouts.len();
        let (kept, dropped) = enforce_off_policy_bound(rollouts, bound);
        prop_assert_eq!(kept.len() + dropped.len(), total);
        prop_assert!(kept.iter().all(|r| r.off_policy_age() <= bound));
        prop_assert!(dropped.iter().all(|r| r.off_policy_age() > bound));
    }

    #[test]
    fn config_survives_a_toml_round_trip(
        seed in 0u64..u32::MAX as u64,
        group_size in 2usize..64,
        alpha in 0.01f64..0.99,
        lr in 0.0001f64..1.0,
        steps in 0u64..10_000,
    ) {
        let mut cfg = RunConfig::default();
        cfg.seed = seed;
        cfg.rollout.group_size = group_size;
        cfg.loss.alpha = alpha;
        cfg.optimizer.learning_rate = lr;
        cfg.sim.trainer_steps = steps;
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

fn small_run(mode: Mode) -> asyncrl::simengine::SimOutcome {
    let mut cfg = RunConfig::default();
    cfg.seed = 40;
    cfg.rollout.group_size = 2;
    cfg.rollout.prompts_per_batch = 4;
    cfg.curriculum.online_filter = false;
    cfg.sim.mode = mode;
    cfg.sim.trainer_steps = 15;
    cfg.sim.clients = 3;
    cfg.engine.rollout_length =
        RolloutLength::LogNormal { median_tokens: 8.0, sigma: 0.8, max_tokens: 64 };
    cfg.dataset.count = 16;
    cfg.validate().expect("config is valid");
    run_schedule(&cfg).expect("simulation runs")
}

#[test]
fn client_versions_never_move_backwards() {
    for mode in [Mode::Synchronous, Mode::Async { k: 2 }, Mode::ContinuousInflight] {
        let outcome = small_run(mode);
        let mut last: std::collections::BTreeMap<usize, u64> = Default::default();
        for event in &outcome.trace.events {
            if let SimEventKind::TokenEmitted { client, version, .. } = event.kind {
                let prev = last.entry(client).or_insert(0);
                assert!(version >= *prev, "client {client} went from v{prev} to v{version}");
                *prev = version;
            }
        }
    }
}

#[test]
fn synchronous_generation_is_pure_on_policy() {
    let outcome = small_run(Mode::Synchronous);
    for event in &outcome.trace.events {
        if let SimEventKind::RolloutDone { versions_spanned, .. } = &event.kind {
            assert_eq!(
                versions_spanned.len(),
                1,
                "synchronous rollout spanned {versions_spanned:?}"
            );
        }
    }
}

#[test]
fn weight_update_windows_never_overlap_generation() {
    // No token lands strictly inside an update begin/end window; a tick
    // that collides with the window edge is allowed.
    for mode in [Mode::Synchronous, Mode::Async { k: 1 }, Mode::ContinuousInflight] {
        let outcome = small_run(mode);
        let mut windows: Vec<(f64, f64)> = Vec::new();
        let mut open: Option<f64> = None;
        for event in &outcome.trace.events {
            match event.kind {
                SimEventKind::WeightUpdateBegin { .. } => open = Some(event.time),
                SimEventKind::WeightUpdateEnd { .. } => {
                    windows.push((open.take().expect("balanced update events"), event.time))
                }
                _ => {}
            }
        }
        for event in &outcome.trace.events {
            if let SimEventKind::TokenEmitted { .. } = event.kind {
                let t = event.time;
                assert!(
                    !windows.iter().any(|(a, b)| *a < t && t < *b),
                    "token emitted mid-relay at t={t}"
                );
            }
        }
    }
}

#[test]
fn traces_validate_and_round_trip() {
    for mode in [Mode::Synchronous, Mode::Async { k: 2 }, Mode::ContinuousInflight] {
        let outcome = small_run(mode);
        outcome.trace.validate().expect("trace is well formed");
        let mut buf = Vec::new();
        outcome.trace.write_jsonl(&mut buf).expect("trace writes");
        let back = asyncrl::trace::SimTrace::read_jsonl(&buf[..]).expect("trace parses");
        assert_eq!(back, outcome.trace);
    }
}
