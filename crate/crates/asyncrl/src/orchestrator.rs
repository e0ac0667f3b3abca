//! Scheduling primitives: client bookkeeping, the in-flight request
//! pool, the off-policy bound, batch assembly, and weight relay.
//!
//! These are deliberately small pure-ish pieces; the event loop in
//! `simengine` wires them to a clock. Keeping them separate makes each
//! rule testable without running a simulation.

use std::collections::BTreeMap;

use crate::curriculum::{online_filter, PromptSpec};
use crate::types::{Rollout, RolloutGroup, TrainBatch, TypeError};

/// Trainer-side view of one inference client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientHandle {
    pub id: usize,
    /// Version of the weights currently loaded.
    pub version: u64,
    /// Generation is paused until this virtual time while weights relay.
    pub paused_until: f64,
    /// Version that becomes current when the pause ends.
    pub pending_version: Option<u64>,
}

impl ClientHandle {
    pub fn new(id: usize) -> Self {
        Self { id, version: 0, paused_until: 0.0, pending_version: None }
    }

    pub fn is_paused(&self, now: f64) -> bool {
        now < self.paused_until
    }

    /// Installs the pending version once the pause has elapsed.
    pub fn settle(&mut self, now: f64) {
        if now >= self.paused_until {
            if let Some(v) = self.pending_version.take() {
                self.version = v;
            }
        }
    }
}

/// Pauses every client for `duration` and stages `new_version` for
/// installation at the pause end. Returns the time the relay completes.
/// Rollouts in progress are kept; their later tokens will simply carry
/// the new version.
pub fn relay_weights(clients: &mut [ClientHandle], new_version: u64, now: f64, duration: f64) -> f64 {
    let end = now + duration;
    for client in clients.iter_mut() {
        client.settle(now);
        client.paused_until = end;
        client.pending_version = Some(new_version);
    }
    end
}

/// Requests are numbered globally; request `n` goes to client
/// `n mod client_count`.
pub fn dispatch_round_robin(request_seq: u64, client_count: usize) -> usize {
    assert!(client_count > 0, "dispatch requires at least one client");
    (request_seq % client_count as u64) as usize
}

/// One group request handed to a client: all G rollouts of the prompt
/// are generated by that client.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTicket {
    pub request_seq: u64,
    pub prompt: PromptSpec,
    pub client: usize,
}

/// Fixed-capacity set of group requests in flight. Completions free a
/// slot immediately; `refill` tops the pool back up.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    capacity: usize,
    next_seq: u64,
    in_flight: BTreeMap<u64, GroupTicket>,
}

impl PoolState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "pool capacity must be positive");
        Self { capacity, next_seq: 0, in_flight: BTreeMap::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn vacancies(&self) -> usize {
        self.capacity - self.in_flight.len()
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &GroupTicket> {
        self.in_flight.values()
    }

    /// Admits one prompt, assigning its client round-robin. Panics if the
    /// pool is full; callers refill only into vacancies.
    pub fn admit(&mut self, prompt: PromptSpec, client_count: usize) -> GroupTicket {
        assert!(self.vacancies() > 0, "pool overfull");
        let request_seq = self.next_seq;
        self.next_seq += 1;
        let ticket = GroupTicket {
            request_seq,
            prompt,
            client: dispatch_round_robin(request_seq, client_count),
        };
        self.in_flight.insert(request_seq, ticket.clone());
        ticket
    }

    /// Fills every vacancy from `prompts`, in order. Returns the admitted
    /// tickets; unused prompts are dropped by the caller.
    pub fn refill(
        &mut self,
        prompts: impl IntoIterator<Item = PromptSpec>,
        client_count: usize,
    ) -> Vec<GroupTicket> {
        let take = self.vacancies();
        prompts
            .into_iter()
            .take(take)
            .map(|p| self.admit(p, client_count))
            .collect()
    }

    pub fn complete(&mut self, request_seq: u64) -> Option<GroupTicket> {
        self.in_flight.remove(&request_seq)
    }
}

/// Splits finished rollouts into those within the off-policy bound and
/// those spanning too many distinct policy versions. The bound is
/// inclusive: a rollout spanning exactly `max_off_policy_steps` versions
/// is kept.
pub fn enforce_off_policy_bound(
    rollouts: Vec<Rollout>,
    max_off_policy_steps: usize,
) -> (Vec<Rollout>, Vec<Rollout>) {
    rollouts.into_iter().partition(|r| r.off_policy_age() <= max_off_policy_steps)
}

/// Filters zero-signal groups and packs the rest with advantages.
/// Returns `None` when every group was filtered, along with how many
/// were dropped; the caller decides whether to wait for more data.
pub fn assemble_batch(
    groups: Vec<RolloutGroup>,
    step_target: u64,
) -> Result<(Option<TrainBatch>, usize), TypeError> {
    let (kept, dropped) = online_filter(groups);
    if kept.is_empty() {
        return Ok((None, dropped));
    }
    Ok((Some(TrainBatch::assemble(kept, step_target)?), dropped))
}
