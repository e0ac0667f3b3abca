//! The real trainer: analytic gradients through the masked loss, then a
//! momentum plus Newton-Schulz optimizer step, driven by the simulator.

use crate::config::{LossConfig, OptimizerConfig, RunConfig};
use crate::rlmath::{icepop_gradient, muon_step, FeatureSource, MuonState};
use crate::types::{PolicyParams, TrainBatch};

use super::env::resolve_prompts;
use super::{run_simulation, SimError, SimOutcome, StepResult, TrainerHook};

/// Gradient-descent trainer for the toy policy.
#[derive(Debug)]
pub struct MuonTrainer {
    features: FeatureSource,
    state: Option<MuonState>,
    loss_cfg: LossConfig,
    opt_cfg: OptimizerConfig,
}

impl MuonTrainer {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            features: FeatureSource::new(cfg.policy.feature_dim, cfg.seed),
            state: None,
            loss_cfg: cfg.loss.clone(),
            opt_cfg: cfg.optimizer.clone(),
        }
    }
}

impl TrainerHook for MuonTrainer {
    fn train_step(&mut self, batch: &TrainBatch, params: &PolicyParams) -> Result<StepResult, SimError> {
        let (grad, report) = icepop_gradient(params, batch, &self.features, &self.loss_cfg)?;
        let state = self
            .state
            .get_or_insert_with(|| MuonState::new(params.feature_dim(), params.vocab_size()));
        let params = muon_step(params, &grad, state, &self.opt_cfg)?;
        Ok(StepResult {
            params,
            loss: report.loss_value,
            masked_fraction: report.masked_fraction(),
        })
    }
}

/// Full training run: generate, score, filter, batch, step, relay, all
/// inside the simulator. The learning curve is in the returned outcome.
pub fn train_toy_policy(cfg: &RunConfig) -> Result<SimOutcome, SimError> {
    let prompts = resolve_prompts(cfg)?;
    let mut trainer = MuonTrainer::new(cfg);
    run_simulation(cfg, prompts, &mut trainer)
}

/// Outcome of a training run; alias kept next to the trainer for
/// discoverability.
pub type TrainOutcome = SimOutcome;
