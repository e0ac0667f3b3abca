//! Measurement and reporting: load imbalance, activation-memory
//! planning, off-policy age distribution, and throughput summaries
//! derived from event traces.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{SimEventKind, SimTrace};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("load vector must not be empty")]
    EmptyLoads,
    #[error("loads must be nonnegative with a positive mean, got mean {0}")]
    BadMean(f64),
    #[error("memory plan dimensions overflow a u128 byte count")]
    Overflow,
}

/// Relative excess of the most loaded worker over the mean:
/// `(max - mean) / mean`. Zero means perfectly balanced; 1 means the
/// busiest worker carries twice the mean.
pub fn max_violation(loads: &[f64]) -> Result<f64, MetricsError> {
    if loads.is_empty() {
        return Err(MetricsError::EmptyLoads);
    }
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    if !(mean > 0.0) || loads.iter().any(|l| *l < 0.0) {
        return Err(MetricsError::BadMean(mean));
    }
    let max = loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - mean) / mean)
}

/// Byte budget for storing one transformer forward pass worth of
/// activations at a given context length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPlan {
    pub layers: u64,
    pub seq_len: u64,
    pub hidden_size: u64,
    pub bytes_per_element: u64,
    pub total_bytes: u128,
}

/// `layers * seq_len * hidden * bytes_per_element`, checked.
pub fn activation_memory(
    layers: u64,
    seq_len: u64,
    hidden_size: u64,
    bytes_per_element: u64,
) -> Result<MemoryPlan, MetricsError> {
    let total_bytes = (layers as u128)
        .checked_mul(seq_len as u128)
        .and_then(|v| v.checked_mul(hidden_size as u128))
        .and_then(|v| v.checked_mul(bytes_per_element as u128))
        .ok_or(MetricsError::Overflow)?;
    Ok(MemoryPlan { layers, seq_len, hidden_size, bytes_per_element, total_bytes })
}

/// Renders a byte count in decimal gigabytes, or binary gibibytes when
/// `binary` is set.
pub fn format_bytes(bytes: u128, binary: bool) -> String {
    if binary {
        format!("{:.2} GiB", bytes as f64 / (1u64 << 30) as f64)
    } else {
        format!("{:.2} GB", bytes as f64 / 1e9)
    }
}

/// Distribution of distinct policy versions per finished rollout,
/// extracted from a trace.
pub fn off_policy_age_histogram(trace: &SimTrace) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for event in &trace.events {
        if let SimEventKind::RolloutDone { versions_spanned, .. } = &event.kind {
            *hist.entry(versions_spanned.len()).or_insert(0) += 1;
        }
    }
    hist
}

/// Utilization summary for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Virtual time from the first dispatch to the last event.
    pub window: f64,
    pub total_tokens: u64,
    pub tokens_per_second: f64,
    pub completed_rollouts: u64,
    pub discarded_rollouts: u64,
    pub trainer_steps: u64,
    /// Fraction of the window each client spent not generating, indexed
    /// by client id.
    pub client_idle_fraction: Vec<f64>,
    pub mean_idle_fraction: f64,
}

/// Derives throughput and idle time from a trace alone. A client is
/// considered busy for the `per_token_time` interval ending at each of
/// its token events; idle time is the rest of the measurement window,
/// which starts at the first dispatch.
pub fn throughput_report(trace: &SimTrace) -> ThroughputReport {
    let start = trace
        .events
        .iter()
        .find(|e| matches!(e.kind, SimEventKind::BatchDispatched { .. }))
        .map_or(0.0, |e| e.time);
    let end = trace.events.last().map_or(start, |e| e.time);
    let window = (end - start).max(0.0);
    let tau = trace.meta.per_token_time;

    let mut total_tokens = 0u64;
    let mut completed_rollouts = 0u64;
    let mut discarded_rollouts = 0u64;
    let mut trainer_steps = 0u64;
    let mut busy_intervals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); trace.meta.clients];
    for event in &trace.events {
        match &event.kind {
            SimEventKind::TokenEmitted { client, .. } => {
                total_tokens += 1;
                if let Some(iv) = busy_intervals.get_mut(*client) {
                    iv.push(((event.time - tau).max(start), event.time.min(end)));
                }
            }
            SimEventKind::RolloutDone { .. } => completed_rollouts += 1,
            SimEventKind::RolloutDiscarded { .. } => discarded_rollouts += 1,
            SimEventKind::TrainerStepDone { .. } => trainer_steps += 1,
            _ => {}
        }
    }

    let client_idle_fraction: Vec<f64> = busy_intervals
        .iter()
        .map(|intervals| {
            if window <= 0.0 {
                return 0.0;
            }
            let busy = merged_length(intervals);
            (1.0 - busy / window).clamp(0.0, 1.0)
        })
        .collect();
    let mean_idle_fraction = if client_idle_fraction.is_empty() {
        0.0
    } else {
        client_idle_fraction.iter().sum::<f64>() / client_idle_fraction.len() as f64
    };

    ThroughputReport {
        window,
        total_tokens,
        tokens_per_second: if window > 0.0 { total_tokens as f64 / window } else { 0.0 },
        completed_rollouts,
        discarded_rollouts,
        trainer_steps,
        client_idle_fraction,
        mean_idle_fraction,
    }
}

/// Total length of a union of (possibly overlapping) sorted-by-event-time
/// intervals.
fn merged_length(intervals: &[(f64, f64)]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = intervals.iter().filter(|(a, b)| b > a).cloned().collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (a, b) in sorted {
        match current {
            Some((ca, cb)) if a <= cb => current = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                current = Some((a, b));
            }
            None => current = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = current {
        total += cb - ca;
    }
    total
}

/// One point on a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    /// Mean reward over every group scored since the previous step,
    /// before any filtering.
    pub mean_reward: f64,
    pub loss: f64,
    /// Fraction of batch tokens zeroed by the ratio mask or guard.
    pub masked_token_fraction: f64,
    /// Rollouts discarded for staleness since the previous step.
    pub discard_count: u64,
}

/// Writes a learning curve as CSV with a header row.
pub fn write_curve_csv(points: &[CurvePoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "step,mean_reward,loss,masked_token_fraction,discard_count")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.step, p.mean_reward, p.loss, p.masked_token_fraction, p.discard_count
        )?;
    }
    Ok(())
}

pub fn save_curve_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_curve_csv(points, &mut buf)?;
    buf.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceMeta;
    use approx::assert_relative_eq;

    #[test]
    fn balanced_loads_have_zero_violation() {
        assert_relative_eq!(max_violation(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_violation() {
        // Loads 1, 2, 3, 6: mean 3, max 6, violation (6-3)/3 = 1.
        assert_relative_eq!(max_violation(&[1.0, 2.0, 3.0, 6.0]).unwrap(), 1.0);
        // One worker does everything: (8 - 2)/2 = 3.
        assert_relative_eq!(max_violation(&[8.0, 0.0, 0.0, 0.0]).unwrap(), 3.0);
    }

    #[test]
    fn degenerate_loads_rejected() {
        assert_eq!(max_violation(&[]), Err(MetricsError::EmptyLoads));
        assert!(max_violation(&[0.0, 0.0]).is_err());
        assert!(max_violation(&[-1.0, 3.0]).is_err());
    }

    #[test]
    fn activation_memory_reference_shape() {
        // 46 layers, 48k context, hidden 4096, bf16.
        let plan = activation_memory(46, 48_000, 4096, 2).unwrap();
        assert_eq!(plan.total_bytes, 18_087_936_000);
        assert_eq!(format_bytes(plan.total_bytes, false), "18.09 GB");
        assert_eq!(format_bytes(plan.total_bytes, true), "16.85 GiB");
    }

    #[test]
    fn interval_union_handles_overlap() {
        assert_relative_eq!(merged_length(&[(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]), 3.0);
        assert_relative_eq!(merged_length(&[(1.0, 1.0)]), 0.0);
    }

    #[test]
    fn throughput_from_tiny_trace() {
        let mut trace = SimTrace::new(TraceMeta {
            seed: 0,
            mode: "synchronous".into(),
            clients: 2,
            per_token_time: 1.0,
            trainer_steps: 1,
        });
        trace.push(0.0, SimEventKind::BatchDispatched { prompts: vec!["p0".into()] });
        for t in 1..=4 {
            trace.push(
                t as f64,
                SimEventKind::TokenEmitted {
                    client: 0,
                    prompt_id: "p0".into(),
                    rollout_index: 0,
                    version: 0,
                },
            );
        }
        trace.push(
            4.0,
            SimEventKind::RolloutDone {
                client: 0,
                prompt_id: "p0".into(),
                rollout_index: 0,
                reward: 1.0,
                tokens: 4,
                versions_spanned: vec![0],
            },
        );
        trace.push(5.0, SimEventKind::TrainerStepDone { step: 1, new_version: 1, groups: 1, loss: 0.0 });

        let report = throughput_report(&trace);
        assert_relative_eq!(report.window, 5.0);
        assert_eq!(report.total_tokens, 4);
        assert_relative_eq!(report.tokens_per_second, 0.8);
        // Client 0 was busy 4 of 5 seconds; client 1 never worked.
        assert_relative_eq!(report.client_idle_fraction[0], 0.2);
        assert_relative_eq!(report.client_idle_fraction[1], 1.0);
        assert_eq!(report.trainer_steps, 1);
    }

    #[test]
    fn age_histogram_counts_rollouts() {
        let mut trace = SimTrace::new(TraceMeta {
            seed: 0,
            mode: "continuous_inflight".into(),
            clients: 1,
            per_token_time: 0.01,
            trainer_steps: 1,
        });
        for spans in [vec![0], vec![0, 1], vec![2], vec![0, 1, 2]] {
            trace.push(
                1.0,
                SimEventKind::RolloutDone {
                    client: 0,
                    prompt_id: "p".into(),
                    rollout_index: 0,
                    reward: 0.0,
                    tokens: 1,
                    versions_spanned: spans,
                },
            );
        }
        let hist = off_policy_age_histogram(&trace);
        assert_eq!(hist, BTreeMap::from([(1, 2), (2, 1), (3, 1)]));
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let points = vec![CurvePoint {
            step: 1,
            mean_reward: 0.5,
            loss: -0.25,
            masked_token_fraction: 0.0,
            discard_count: 2,
        }];
        let mut buf = Vec::new();
        write_curve_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,mean_reward,loss,masked_token_fraction,discard_count\n1,0.5,-0.25,0,2\n");
    }
}
