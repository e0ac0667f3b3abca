//! Asynchronous reinforcement-learning training engine, desk scale.
//!
//! The crate models the three roles of an async RL system: an orchestrator
//! that schedules rollout requests and assembles batches, a trainer that
//! updates a policy, and an inference pool that generates tokens — and runs
//! them against a deterministic virtual clock so scheduling behavior is
//! reproducible and assertable. The numerical side is real: a masked
//! token-level importance-sampling loss with analytic gradients, group-mean
//! advantages, and a matrix-level optimizer built on Newton-Schulz
//! orthogonalization, all exercised with a toy linear-softmax policy on
//! synthetic verifiable tasks.
//!
//! Entry points:
//! - [`simengine::run_simulation`] produces a full event trace for a run
//!   under one of three scheduling modes (synchronous, bounded-async,
//!   continuous batching with in-flight weight updates).
//! - [`simengine::train_toy_policy`] runs the complete training loop
//!   (generate, score, filter, batch, gradient, optimizer step, weight
//!   relay) inside the simulator and returns a learning curve.
//! - The `asyncrl` binary wraps both behind a small CLI; the `examples/`
//!   directory has one runnable example per major capability.

pub mod config;
pub mod curriculum;
pub mod metrics;
pub mod orchestrator;
pub mod rlmath;
pub mod rng;
pub mod simengine;
pub mod trace;
pub mod types;

pub use config::{load_config, ConfigError, RunConfig};
pub use types::{PolicyParams, Rollout, RolloutGroup, TokenRecord, TrainBatch};
