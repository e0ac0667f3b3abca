//! Discrete-event simulator for the whole training system.
//!
//! A single virtual clock drives inference clients, the orchestrator,
//! the trainer, and weight relays. Everything is single threaded and
//! seeded, so a run is a pure function of its configuration: the same
//! config produces a byte-identical event trace.
//!
//! Three scheduling modes share one event loop and one relay mechanism:
//!
//! - `synchronous`: generation and training alternate in lockstep rounds.
//! - `async_k`: generation may run up to `k` trainer steps ahead.
//! - `continuous_inflight`: a fixed-capacity pool of group requests is
//!   kept full at all times, weights update in flight mid-rollout, and
//!   staleness is controlled by the off-policy bound instead of a gate.

pub mod env;
mod training;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DiscardPolicy, RunConfig};
use crate::curriculum::{CurriculumError, CurriculumState, PromptSpec};
use crate::metrics::CurvePoint;
use crate::orchestrator::{assemble_batch, relay_weights, ClientHandle, PoolState};
use crate::rlmath::{sample_token, FeatureSource, MathError};
use crate::rng::substream;
use crate::trace::{SimEventKind, SimTrace, TraceMeta};
use crate::types::{PolicyParams, Rollout, RolloutGroup, TokenRecord, TrainBatch, TypeError};

pub use env::{generate_synthetic_prompts, resolve_prompts, score_rollout, EnvError};
pub use training::{train_toy_policy, MuonTrainer, TrainOutcome};

/// Timing model of the simulated hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineModel {
    /// Virtual seconds a client spends per generated token.
    pub per_token_time: f64,
    /// Virtual seconds one trainer optimization step takes.
    pub trainer_step_time: f64,
    /// Virtual seconds clients pause while new weights relay in.
    pub weight_update_pause: f64,
    pub rollout_length: RolloutLength,
}

impl Default for EngineModel {
    fn default() -> Self {
        Self {
            per_token_time: 0.01,
            trainer_step_time: 0.5,
            weight_update_pause: 0.05,
            rollout_length: RolloutLength::default(),
        }
    }
}

impl EngineModel {
    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("per_token_time", self.per_token_time),
            ("trainer_step_time", self.trainer_step_time),
            ("weight_update_pause", self.weight_update_pause),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("{name} must be a positive finite duration, got {value}"));
            }
        }
        match &self.rollout_length {
            RolloutLength::Fixed { tokens } if *tokens == 0 => {
                Err("rollout_length.tokens must be at least 1".into())
            }
            RolloutLength::LogNormal { median_tokens, sigma, max_tokens } => {
                if !(*median_tokens >= 1.0 && median_tokens.is_finite()) {
                    Err(format!("rollout_length.median_tokens must be >= 1, got {median_tokens}"))
                } else if !(*sigma >= 0.0 && sigma.is_finite()) {
                    Err(format!("rollout_length.sigma must be nonnegative, got {sigma}"))
                } else if *max_tokens == 0 {
                    Err("rollout_length.max_tokens must be at least 1".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Distribution of rollout lengths in tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RolloutLength {
    Fixed { tokens: usize },
    /// Log-normal with the given median; heavy tails are what make
    /// long-rollout staleness interesting.
    LogNormal { median_tokens: f64, sigma: f64, max_tokens: usize },
}

impl Default for RolloutLength {
    fn default() -> Self {
        Self::LogNormal { median_tokens: 8.0, sigma: 0.5, max_tokens: 64 }
    }
}

impl RolloutLength {
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        match self {
            Self::Fixed { tokens } => *tokens,
            Self::LogNormal { median_tokens, sigma, max_tokens } => {
                let dist = rand_distr::LogNormal::new(median_tokens.ln(), *sigma)
                    .expect("validated parameters");
                let drawn: f64 = rng.sample(dist);
                (drawn.round() as usize).clamp(1, *max_tokens)
            }
        }
    }
}

/// Scheduling mode, written as `synchronous`, `async_<k>` or
/// `continuous_inflight` in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synchronous,
    Async { k: u64 },
    ContinuousInflight,
}

impl Mode {
    /// How many trainer steps generation may run ahead; `None` means
    /// continuous mode, which is bounded by off-policy age instead.
    pub fn gate_k(&self) -> Option<u64> {
        match self {
            Mode::Synchronous => Some(0),
            Mode::Async { k } => Some(*k),
            Mode::ContinuousInflight => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Synchronous => write!(f, "synchronous"),
            Mode::Async { k } => write!(f, "async_{k}"),
            Mode::ContinuousInflight => write!(f, "continuous_inflight"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synchronous" => Ok(Mode::Synchronous),
            "continuous_inflight" => Ok(Mode::ContinuousInflight),
            other => match other.strip_prefix("async_") {
                Some(k) => k
                    .parse()
                    .map(|k| Mode::Async { k })
                    .map_err(|_| format!("bad async lag in mode `{other}`")),
                None => Err(format!(
                    "unknown mode `{other}` (expected `synchronous`, `async_<k>` or `continuous_inflight`)"
                )),
            },
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// What one trainer step produced.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub params: PolicyParams,
    pub loss: f64,
    pub masked_fraction: f64,
}

/// The trainer side of the simulation. The scheduling-only trainer just
/// bumps the version; the real one computes gradients and runs the
/// optimizer.
pub trait TrainerHook {
    fn train_step(&mut self, batch: &TrainBatch, params: &PolicyParams) -> Result<StepResult, SimError>;
}

/// Trainer that models only the timing side: each step produces a new
/// version with unchanged weights.
#[derive(Debug, Default)]
pub struct VersionBumpTrainer;

impl TrainerHook for VersionBumpTrainer {
    fn train_step(&mut self, _batch: &TrainBatch, params: &PolicyParams) -> Result<StepResult, SimError> {
        Ok(StepResult {
            params: PolicyParams::new(params.version + 1, params.weights.clone())?,
            loss: 0.0,
            masked_fraction: 0.0,
        })
    }
}

/// Contents of one consumed trainer batch, for inspection after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub step: u64,
    pub prompt_ids: Vec<String>,
    pub group_rewards: Vec<Vec<f64>>,
    /// Zero-signal groups dropped while assembling this batch.
    pub filtered_groups: usize,
}

/// One dispatch of prompts to the inference pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub time: f64,
    pub prompt_ids: Vec<String>,
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub curve: Vec<CurvePoint>,
    pub batches: Vec<BatchRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub curriculum: CurriculumState,
    pub final_params: PolicyParams,
    pub completed_steps: u64,
}

/// Runs the scheduling simulation with the timing-only trainer and the
/// configured prompt source.
pub fn run_schedule(cfg: &RunConfig) -> Result<SimOutcome, SimError> {
    let prompts = resolve_prompts(cfg)?;
    run_simulation(cfg, prompts, &mut VersionBumpTrainer)
}

/// Runs the full simulation until the configured number of trainer steps
/// completes (or no further progress is possible, e.g. every prompt has
/// been retired).
pub fn run_simulation(
    cfg: &RunConfig,
    prompts: Vec<PromptSpec>,
    trainer: &mut dyn TrainerHook,
) -> Result<SimOutcome, SimError> {
    Sim::new(cfg, prompts, trainer)?.run()
}

#[derive(Debug)]
enum EventKind {
    ClientTick { client: usize },
    TrainerDone,
    RelayEnd,
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug)]
struct RolloutTask {
    group_seq: u64,
    rollout_index: usize,
    remaining: usize,
    tokens: Vec<TokenRecord>,
}

#[derive(Debug)]
struct ClientState {
    handle: ClientHandle,
    queue: VecDeque<RolloutTask>,
    tick_pending: bool,
    rng: ChaCha8Rng,
}

#[derive(Debug)]
struct GroupState {
    prompt: PromptSpec,
    client: usize,
    round: Option<u64>,
    outstanding: usize,
    done: Vec<Rollout>,
}

struct Sim<'a> {
    cfg: &'a RunConfig,
    trainer: &'a mut dyn TrainerHook,
    heap: BinaryHeap<Reverse<Event>>,
    event_seq: u64,
    now: f64,
    clients: Vec<ClientState>,
    pool: PoolState,
    groups: BTreeMap<u64, GroupState>,
    curriculum: CurriculumState,
    features: FeatureSource,
    trainer_params: PolicyParams,
    infer_params: PolicyParams,
    staged_params: Option<PolicyParams>,
    trainer_busy: bool,
    pending_batch: Option<TrainBatch>,
    batch_queue: VecDeque<Vec<RolloutGroup>>,
    ready_groups: Vec<RolloutGroup>,
    round_outstanding: BTreeMap<u64, usize>,
    round_groups: BTreeMap<u64, Vec<RolloutGroup>>,
    next_round: u64,
    rounds_generating: u64,
    completed_steps: u64,
    scored_rewards: Vec<f64>,
    discards_since_step: u64,
    length_rng: ChaCha8Rng,
    curriculum_rng: ChaCha8Rng,
    trace: SimTrace,
    curve: Vec<CurvePoint>,
    batches: Vec<BatchRecord>,
    dispatches: Vec<DispatchRecord>,
    done: bool,
}

impl<'a> Sim<'a> {
    fn new(
        cfg: &'a RunConfig,
        prompts: Vec<PromptSpec>,
        trainer: &'a mut dyn TrainerHook,
    ) -> Result<Self, SimError> {
        let curriculum = CurriculumState::new(prompts)?;
        let clients = (0..cfg.sim.clients)
            .map(|i| ClientState {
                handle: ClientHandle::new(i),
                queue: VecDeque::new(),
                tick_pending: false,
                rng: substream(cfg.seed, 100 + i as u64),
            })
            .collect();
        let capacity = match cfg.sim.mode.gate_k() {
            None => cfg.rollout.pool_capacity(),
            // Up to k+1 rounds can be in flight at once.
            Some(k) => cfg.rollout.prompts_per_batch * (k as usize + 1),
        };
        let params = PolicyParams::zeros(cfg.policy.feature_dim, cfg.policy.vocab_size);
        let trace = SimTrace::new(TraceMeta {
            seed: cfg.seed,
            mode: cfg.sim.mode.to_string(),
            clients: cfg.sim.clients,
            per_token_time: cfg.engine.per_token_time,
            trainer_steps: cfg.sim.trainer_steps,
        });
        Ok(Self {
            cfg,
            trainer,
            heap: BinaryHeap::new(),
            event_seq: 0,
            now: 0.0,
            clients,
            pool: PoolState::new(capacity),
            groups: BTreeMap::new(),
            curriculum,
            features: FeatureSource::new(cfg.policy.feature_dim, cfg.seed),
            trainer_params: params.clone(),
            infer_params: params,
            staged_params: None,
            trainer_busy: false,
            pending_batch: None,
            batch_queue: VecDeque::new(),
            ready_groups: Vec::new(),
            round_outstanding: BTreeMap::new(),
            round_groups: BTreeMap::new(),
            next_round: 0,
            rounds_generating: 0,
            completed_steps: 0,
            scored_rewards: Vec::new(),
            discards_since_step: 0,
            length_rng: substream(cfg.seed, 50),
            curriculum_rng: substream(cfg.seed, 1),
            trace,
            curve: Vec::new(),
            batches: Vec::new(),
            dispatches: Vec::new(),
            done: false,
        })
    }

    fn run(mut self) -> Result<SimOutcome, SimError> {
        if self.cfg.sim.trainer_steps > 0 {
            match self.cfg.sim.mode {
                Mode::ContinuousInflight => self.fill_pool()?,
                _ => self.try_dispatch_rounds()?,
            }
        }
        while let Some(Reverse(event)) = self.heap.pop() {
            if self.done {
                break;
            }
            debug_assert!(event.time >= self.now, "virtual time must not go backwards");
            self.now = event.time;
            match event.kind {
                EventKind::ClientTick { client } => self.on_tick(client)?,
                EventKind::TrainerDone => self.on_trainer_done()?,
                EventKind::RelayEnd => self.on_relay_end()?,
            }
        }
        Ok(SimOutcome {
            trace: self.trace,
            curve: self.curve,
            batches: self.batches,
            dispatches: self.dispatches,
            curriculum: self.curriculum,
            final_params: self.trainer_params,
            completed_steps: self.completed_steps,
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.event_seq;
        self.event_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
    }

    fn schedule_tick(&mut self, client: usize, time: f64) {
        if !self.clients[client].tick_pending {
            self.clients[client].tick_pending = true;
            self.schedule(time, EventKind::ClientTick { client });
        }
    }

    fn emit(&mut self, kind: SimEventKind) {
        self.trace.push(self.now, kind);
    }

    /// Hands a set of prompts to the pool as group requests, creating one
    /// generation task per rollout on the assigned client.
    fn dispatch_groups(&mut self, prompts: Vec<PromptSpec>, round: Option<u64>) -> Result<(), SimError> {
        if prompts.is_empty() {
            return Ok(());
        }
        let ids: Vec<String> = prompts.iter().map(|p| p.id.clone()).collect();
        for prompt in prompts {
            let ticket = self.pool.admit(prompt.clone(), self.clients.len());
            self.groups.insert(
                ticket.request_seq,
                GroupState {
                    prompt,
                    client: ticket.client,
                    round,
                    outstanding: self.cfg.rollout.group_size,
                    done: Vec::new(),
                },
            );
            if let Some(r) = round {
                *self.round_outstanding.entry(r).or_insert(0) += 1;
            }
            for rollout_index in 0..self.cfg.rollout.group_size {
                let remaining = self.cfg.engine.rollout_length.sample(&mut self.length_rng);
                self.clients[ticket.client].queue.push_back(RolloutTask {
                    group_seq: ticket.request_seq,
                    rollout_index,
                    remaining,
                    tokens: Vec::new(),
                });
            }
            let start = self.now + self.cfg.engine.per_token_time;
            self.schedule_tick(ticket.client, start);
        }
        self.dispatches.push(DispatchRecord { time: self.now, prompt_ids: ids.clone() });
        self.emit(SimEventKind::BatchDispatched { prompts: ids });
        Ok(())
    }

    /// Continuous mode: keep the request pool full.
    fn fill_pool(&mut self) -> Result<(), SimError> {
        let vacancies = self.pool.vacancies();
        if vacancies == 0 || self.done {
            return Ok(());
        }
        let prompts =
            self.curriculum.sample_prompts(&self.cfg.curriculum, vacancies, &mut self.curriculum_rng);
        self.dispatch_groups(prompts, None)
    }

    /// Round modes: dispatch the next round whenever the lag gate allows
    /// and more trainer steps are still wanted.
    fn try_dispatch_rounds(&mut self) -> Result<(), SimError> {
        let Some(k) = self.cfg.sim.mode.gate_k() else {
            return Ok(());
        };
        loop {
            let in_flight =
                self.trainer_busy as u64 + self.batch_queue.len() as u64 + self.rounds_generating;
            // One round generates at a time (the clients are shared); the
            // lag gate bounds how far that round may run ahead of the
            // trainer.
            if self.rounds_generating > 0
                || in_flight > k
                || self.completed_steps + in_flight >= self.cfg.sim.trainer_steps
            {
                return Ok(());
            }
            let prompts = self.curriculum.sample_prompts(
                &self.cfg.curriculum,
                self.cfg.rollout.prompts_per_batch,
                &mut self.curriculum_rng,
            );
            if prompts.is_empty() {
                return Ok(());
            }
            let round = self.next_round;
            self.next_round += 1;
            self.rounds_generating += 1;
            self.round_groups.entry(round).or_default();
            self.dispatch_groups(prompts, Some(round))?;
        }
    }

    fn on_tick(&mut self, client: usize) -> Result<(), SimError> {
        let tau = self.cfg.engine.per_token_time;
        self.clients[client].tick_pending = false;
        self.clients[client].handle.settle(self.now);
        let paused_until = self.clients[client].handle.paused_until;
        if self.now < paused_until {
            // A token interrupted by a relay completes at pause end; it
            // is then stamped with the freshly installed version.
            self.schedule_tick(client, paused_until);
            return Ok(());
        }
        let Some(mut task) = self.clients[client].queue.pop_front() else {
            return Ok(());
        };
        let prompt_id = self.groups[&task.group_seq].prompt.id.clone();
        let f = self.features.features(&prompt_id);
        let (token, logprob) = sample_token(&self.infer_params, &f, &mut self.clients[client].rng)?;
        let version = self.clients[client].handle.version;
        task.tokens.push(TokenRecord::new(token, logprob.min(0.0), version)?);
        task.remaining -= 1;
        self.emit(SimEventKind::TokenEmitted {
            client,
            prompt_id,
            rollout_index: task.rollout_index,
            version,
        });
        if task.remaining == 0 {
            self.complete_rollout(client, task)?;
        } else {
            self.clients[client].queue.push_back(task);
        }
        if !self.clients[client].queue.is_empty() {
            self.schedule_tick(client, self.now + tau);
        }
        Ok(())
    }

    fn complete_rollout(&mut self, client: usize, task: RolloutTask) -> Result<(), SimError> {
        let group_seq = task.group_seq;
        let spec = self.groups[&group_seq].prompt.clone();
        let token_ids: Vec<usize> = task.tokens.iter().map(|t| t.token_id).collect();
        let reward = score_rollout(&spec, &token_ids, self.cfg.policy.vocab_size)?;
        let rollout = Rollout::new(spec.id.clone(), spec.task_id.clone(), task.tokens, reward, self.now)?;
        self.emit(SimEventKind::RolloutDone {
            client,
            prompt_id: spec.id.clone(),
            rollout_index: task.rollout_index,
            reward,
            tokens: rollout.token_count(),
            versions_spanned: rollout.versions_spanned.iter().copied().collect(),
        });

        if rollout.off_policy_age() > self.cfg.rollout.max_off_policy_steps {
            self.emit(SimEventKind::RolloutDiscarded {
                prompt_id: spec.id,
                rollout_index: task.rollout_index,
                off_policy_age: rollout.off_policy_age(),
            });
            self.discards_since_step += 1;
            match self.cfg.rollout.discard_policy {
                DiscardPolicy::RegenerateRollout => {
                    let remaining = self.cfg.engine.rollout_length.sample(&mut self.length_rng);
                    self.clients[client].queue.push_back(RolloutTask {
                        group_seq,
                        rollout_index: task.rollout_index,
                        remaining,
                        tokens: Vec::new(),
                    });
                    let tau = self.cfg.engine.per_token_time;
                    self.schedule_tick(client, self.now + tau);
                }
                DiscardPolicy::DropGroup => self.discard_group(group_seq)?,
            }
            return Ok(());
        }

        let group = self.groups.get_mut(&group_seq).expect("group exists until resolved");
        group.done.push(rollout);
        group.outstanding -= 1;
        if group.outstanding == 0 {
            self.complete_group(group_seq)?;
        }
        Ok(())
    }

    /// Removes a group whose rollout busted the off-policy bound,
    /// cancelling its unfinished work.
    fn discard_group(&mut self, group_seq: u64) -> Result<(), SimError> {
        let group = self.groups.remove(&group_seq).expect("group exists until resolved");
        self.clients[group.client].queue.retain(|t| t.group_seq != group_seq);
        self.pool.complete(group_seq);
        match group.round {
            Some(round) => self.finish_round_member(round),
            None => self.fill_pool(),
        }
    }

    fn complete_group(&mut self, group_seq: u64) -> Result<(), SimError> {
        let state = self.groups.remove(&group_seq).expect("group exists until resolved");
        self.pool.complete(group_seq);
        let group = RolloutGroup::new(state.done, self.cfg.rollout.group_size)?;
        self.scored_rewards.extend(group.rewards());
        let retired = self.curriculum.record_group(&group, &self.cfg.curriculum)?;
        if retired {
            self.emit(SimEventKind::PromptRetired { prompt_id: group.prompt_id.clone() });
        }
        match state.round {
            Some(round) => {
                self.round_groups.entry(round).or_default().push(group);
                self.finish_round_member(round)?;
            }
            None => {
                self.ready_groups.push(group);
                self.fill_pool()?;
                self.maybe_start_trainer()?;
            }
        }
        Ok(())
    }

    /// One group of a round resolved (completed or dropped); closes the
    /// round when it was the last one.
    fn finish_round_member(&mut self, round: u64) -> Result<(), SimError> {
        let outstanding = self.round_outstanding.get_mut(&round).expect("round is open");
        *outstanding -= 1;
        if *outstanding > 0 {
            return Ok(());
        }
        self.round_outstanding.remove(&round);
        self.rounds_generating -= 1;
        let groups = self.round_groups.remove(&round).unwrap_or_default();
        if !groups.is_empty() {
            self.batch_queue.push_back(groups);
        }
        self.maybe_start_trainer()?;
        self.try_dispatch_rounds()
    }

    fn maybe_start_trainer(&mut self) -> Result<(), SimError> {
        if self.trainer_busy || self.done {
            return Ok(());
        }
        loop {
            let groups = match self.cfg.sim.mode {
                Mode::ContinuousInflight => {
                    let want = self.cfg.rollout.prompts_per_batch;
                    if self.ready_groups.len() < want {
                        return Ok(());
                    }
                    self.ready_groups.drain(..want).collect::<Vec<_>>()
                }
                _ => match self.batch_queue.pop_front() {
                    Some(groups) => groups,
                    None => return Ok(()),
                },
            };
            let step_target = self.completed_steps + 1;
            let (batch, filtered) = if self.cfg.curriculum.online_filter {
                assemble_batch(groups, step_target)?
            } else {
                (Some(TrainBatch::assemble(groups, step_target)?), 0)
            };
            if let Some(batch) = batch {
                self.batches.push(BatchRecord {
                    step: step_target,
                    prompt_ids: batch.groups.iter().map(|g| g.prompt_id.clone()).collect(),
                    group_rewards: batch.groups.iter().map(RolloutGroup::rewards).collect(),
                    filtered_groups: filtered,
                });
                self.pending_batch = Some(batch);
                self.trainer_busy = true;
                self.schedule(self.now + self.cfg.engine.trainer_step_time, EventKind::TrainerDone);
                return Ok(());
            }
            // Every group in this batch was zero signal; consume it and
            // look for more data. In round modes this reopens the lag
            // gate so a replacement round can be dispatched.
            self.try_dispatch_rounds()?;
        }
    }

    fn on_trainer_done(&mut self) -> Result<(), SimError> {
        let batch = self.pending_batch.take().expect("trainer had a batch");
        let result = self.trainer.train_step(&batch, &self.trainer_params)?;
        self.completed_steps += 1;
        self.trainer_params = result.params;
        self.emit(SimEventKind::TrainerStepDone {
            step: self.completed_steps,
            new_version: self.trainer_params.version,
            groups: batch.groups.len(),
            loss: result.loss,
        });

        let mean_reward = if self.scored_rewards.is_empty() {
            let rewards: Vec<f64> = batch.groups.iter().flat_map(|g| g.rewards()).collect();
            rewards.iter().sum::<f64>() / rewards.len() as f64
        } else {
            self.scored_rewards.iter().sum::<f64>() / self.scored_rewards.len() as f64
        };
        self.scored_rewards.clear();
        self.curve.push(CurvePoint {
            step: self.completed_steps,
            mean_reward,
            loss: result.loss,
            masked_token_fraction: result.masked_fraction,
            discard_count: std::mem::take(&mut self.discards_since_step),
        });

        // Relay the new weights: clients pause, then resume on the new
        // version. The trainer is considered busy until the relay ends.
        let version = self.trainer_params.version;
        self.emit(SimEventKind::WeightUpdateBegin { version });
        let mut handles: Vec<ClientHandle> = self.clients.iter().map(|c| c.handle.clone()).collect();
        let end = relay_weights(&mut handles, version, self.now, self.cfg.engine.weight_update_pause);
        for (client, handle) in self.clients.iter_mut().zip(handles) {
            client.handle = handle;
        }
        self.staged_params = Some(self.trainer_params.clone());
        self.schedule(end, EventKind::RelayEnd);
        Ok(())
    }

    fn on_relay_end(&mut self) -> Result<(), SimError> {
        let version = self.staged_params.as_ref().expect("relay in progress").version;
        self.emit(SimEventKind::WeightUpdateEnd { version });
        self.infer_params = self.staged_params.take().expect("relay in progress");
        self.trainer_busy = false;
        if self.completed_steps >= self.cfg.sim.trainer_steps {
            self.done = true;
            return Ok(());
        }
        self.maybe_start_trainer()?;
        self.try_dispatch_rounds()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_round_trip() {
        for (mode, text) in [
            (Mode::Synchronous, "synchronous"),
            (Mode::Async { k: 3 }, "async_3"),
            (Mode::ContinuousInflight, "continuous_inflight"),
        ] {
            assert_eq!(mode.to_string(), text);
            assert_eq!(text.parse::<Mode>().unwrap(), mode);
        }
        assert!("async_".parse::<Mode>().is_err());
        assert!("sync".parse::<Mode>().is_err());
    }

    #[test]
    fn engine_model_rejects_nonpositive_durations() {
        let mut engine = EngineModel::default();
        engine.per_token_time = 0.0;
        assert!(engine.validate().is_err());
        let mut engine = EngineModel::default();
        engine.rollout_length = RolloutLength::Fixed { tokens: 0 };
        assert!(engine.validate().is_err());
    }

    #[test]
    fn lognormal_lengths_stay_in_bounds() {
        let dist = RolloutLength::LogNormal { median_tokens: 8.0, sigma: 1.0, max_tokens: 32 };
        let mut rng = crate::rng::seeded_rng(2);
        for _ in 0..1000 {
            let len = dist.sample(&mut rng);
            assert!((1..=32).contains(&len));
        }
    }

    fn tiny_config(mode: Mode) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.sim.mode = mode;
        cfg.sim.trainer_steps = 3;
        cfg.sim.clients = 2;
        cfg.rollout.group_size = 4;
        cfg.rollout.prompts_per_batch = 2;
        cfg.dataset.count = 8;
        cfg.engine.rollout_length = RolloutLength::Fixed { tokens: 4 };
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn schedule_run_is_deterministic() {
        for mode in [Mode::Synchronous, Mode::Async { k: 2 }, Mode::ContinuousInflight] {
            let cfg = tiny_config(mode);
            let a = run_schedule(&cfg).unwrap();
            let b = run_schedule(&cfg).unwrap();
            assert_eq!(a.trace, b.trace, "mode {mode}");
            assert_eq!(a.completed_steps, 3);
            a.trace.validate().unwrap();
        }
    }

    #[test]
    fn synchronous_rollouts_never_span_versions() {
        let cfg = tiny_config(Mode::Synchronous);
        let outcome = run_schedule(&cfg).unwrap();
        for event in &outcome.trace.events {
            if let SimEventKind::RolloutDone { versions_spanned, .. } = &event.kind {
                assert_eq!(versions_spanned.len(), 1);
            }
        }
    }

    #[test]
    fn continuous_mode_spans_versions_in_flight() {
        let mut cfg = tiny_config(Mode::ContinuousInflight);
        cfg.engine.rollout_length = RolloutLength::Fixed { tokens: 40 };
        cfg.engine.trainer_step_time = 0.05;
        cfg.sim.trainer_steps = 6;
        let outcome = run_schedule(&cfg).unwrap();
        let spanning = outcome.trace.events.iter().any(|e| {
            matches!(&e.kind, SimEventKind::RolloutDone { versions_spanned, .. } if versions_spanned.len() > 1)
        });
        assert!(spanning, "in-flight updates should produce multi-version rollouts");
    }
}
