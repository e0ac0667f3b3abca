//! Event traces.
//!
//! A simulation run is fully described by its trace: one metadata record
//! followed by every scheduling event in virtual-time order, serialized
//! as line-delimited JSON. Reports and plots are derived from the trace
//! alone, so two runs are identical exactly when their trace files are
//! byte-identical.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot access trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace must start with a meta record")]
    MissingMeta,
    #[error("event times go backwards at line {line}: {prev} then {next}")]
    TimeRegression { line: usize, prev: f64, next: f64 },
    #[error("weight update events do not alternate begin/end (line {line})")]
    UnbalancedUpdate { line: usize },
    #[error("trainer steps out of order: step {step} after {prev}")]
    StepOrder { step: u64, prev: u64 },
}

/// Run parameters a report needs without re-reading the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub mode: String,
    pub clients: usize,
    /// Virtual seconds per generated token.
    pub per_token_time: f64,
    pub trainer_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEventKind {
    /// One token generated by an inference client.
    TokenEmitted {
        client: usize,
        prompt_id: String,
        rollout_index: usize,
        version: u64,
    },
    /// A rollout finished and was scored.
    RolloutDone {
        client: usize,
        prompt_id: String,
        rollout_index: usize,
        reward: f64,
        tokens: usize,
        versions_spanned: Vec<u64>,
    },
    /// One or more group requests handed to the inference pool.
    BatchDispatched { prompts: Vec<String> },
    /// A trainer optimization step finished, producing a new version.
    TrainerStepDone {
        step: u64,
        new_version: u64,
        groups: usize,
        loss: f64,
    },
    /// New weights start relaying to the clients; generation pauses.
    WeightUpdateBegin { version: u64 },
    /// Relay finished; clients resume with the new version.
    WeightUpdateEnd { version: u64 },
    /// Every rollout in a group passed; the prompt leaves the sampling set.
    PromptRetired { prompt_id: String },
    /// A rollout exceeded the off-policy bound and was thrown away.
    RolloutDiscarded {
        prompt_id: String,
        rollout_index: usize,
        off_policy_age: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub events: Vec<SimEvent>,
}

/// The first line of a trace file; tagged so a reader can distinguish it
/// from events without positional assumptions.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeaderLine {
    Meta(TraceMeta),
}

impl SimTrace {
    pub fn new(meta: TraceMeta) -> Self {
        Self { meta, events: Vec::new() }
    }

    pub fn push(&mut self, time: f64, kind: SimEventKind) {
        self.events.push(SimEvent { time, kind });
    }

    /// Serializes to line-delimited JSON, meta record first. Output is
    /// deterministic: field order is fixed by the struct definitions.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), TraceError> {
        let meta = serde_json::to_string(&HeaderLine::Meta(self.meta.clone())).expect("meta serializes");
        writeln!(w, "{meta}")?;
        for event in &self.events {
            let line = serde_json::to_string(event).expect("event serializes");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_jsonl(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::MissingMeta)?;
        let first = first?;
        let HeaderLine::Meta(meta) = serde_json::from_str(&first)
            .map_err(|source| TraceError::Malformed { line: 1, source })?;
        let mut trace = Self::new(meta);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line)
                .map_err(|source| TraceError::Malformed { line: idx + 1, source })?;
            trace.events.push(event);
        }
        Ok(trace)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    /// Structural checks: time never decreases, weight updates alternate
    /// begin and end, trainer steps arrive in order.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut prev_time = f64::NEG_INFINITY;
        let mut update_open = false;
        let mut prev_step = 0u64;
        for (idx, event) in self.events.iter().enumerate() {
            let line = idx + 2;
            if event.time < prev_time {
                return Err(TraceError::TimeRegression {
                    line,
                    prev: prev_time,
                    next: event.time,
                });
            }
            prev_time = event.time;
            match &event.kind {
                SimEventKind::WeightUpdateBegin { .. } => {
                    if update_open {
                        return Err(TraceError::UnbalancedUpdate { line });
                    }
                    update_open = true;
                }
                SimEventKind::WeightUpdateEnd { .. } => {
                    if !update_open {
                        return Err(TraceError::UnbalancedUpdate { line });
                    }
                    update_open = false;
                }
                SimEventKind::TrainerStepDone { step, .. } => {
                    if *step <= prev_step && prev_step != 0 {
                        return Err(TraceError::StepOrder { step: *step, prev: prev_step });
                    }
                    prev_step = *step;
                }
                _ => {}
            }
        }
        Ok(())
    }
}
