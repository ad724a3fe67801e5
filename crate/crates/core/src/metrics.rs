// Copyright (c) 2026 The Camel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Run records and the evaluation metrics computed from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerCounters, ControllerKind, SendMode, Snapshot};
use crate::estimator::FrameSample;
use crate::netsim::{DropKind, RateSchedule};
use crate::types::{FlowId, FrameKind, Micros, MILLISECOND, SECOND};

/// Inter-delivery gaps longer than this count as stalls.
pub const STALL_THRESHOLD: Micros = 200 * MILLISECOND;

/// Estimates younger than this after a flow starts are not scored.
pub const ACCURACY_WARMUP: Micros = 5 * SECOND;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("all throughputs are zero")]
    AllZero,
    #[error("no flows")]
    NoFlows,
    #[error("empty series")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub id: FlowId,
    pub kind: ControllerKind,
    pub start: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow: FlowId,
    pub frame_id: u64,
    pub seq_in_frame: u32,
    pub size: u64,
    pub send_time: Micros,
    pub burst_offset: u64,
    pub recv_time: Option<Micros>,
    pub drop: Option<DropKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub flow: FlowId,
    pub frame_id: u64,
    pub report_send_time: Micros,
    pub arrival_time: Micros,
    pub received: u32,
    pub lost: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub flow: FlowId,
    pub frame_id: u64,
    pub kind: FrameKind,
    pub size: u64,
    pub encode_time: Micros,
    /// Arrival of the last packet, when every packet arrived.
    pub delivered: Option<Micros>,
}

/// Everything a simulation run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub duration: Micros,
    pub snapshot_interval: Micros,
    pub flows: Vec<FlowInfo>,
    pub link_rate: RateSchedule,
    pub packets: Vec<PacketRecord>,
    pub feedback: Vec<FeedbackRecord>,
    pub frames: Vec<FrameRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Per-frame bandwidth and delay samples in feedback order.
    pub samples: Vec<(FlowId, FrameSample)>,
    pub counters: Vec<ControllerCounters>,
    pub cross_traffic_bytes: u64,
    pub violations: Vec<String>,
    pub violation_count: u64,
}

impl RunLog {
    pub fn empty(duration: Micros, snapshot_interval: Micros, link_rate: RateSchedule) -> Self {
        RunLog {
            duration,
            snapshot_interval,
            flows: vec![],
            link_rate,
            packets: vec![],
            feedback: vec![],
            frames: vec![],
            snapshots: vec![],
            samples: vec![],
            counters: vec![],
            cross_traffic_bytes: 0,
            violations: vec![],
            violation_count: 0,
        }
    }

    pub fn flow_snapshots(&self, flow: FlowId) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(move |s| s.flow == flow)
    }

    /// Delivery times of the flow's fully delivered frames, in order.
    pub fn deliveries(&self, flow: FlowId) -> Vec<Micros> {
        let mut d: Vec<Micros> = self
            .frames
            .iter()
            .filter(|f| f.flow == flow)
            .filter_map(|f| f.delivered)
            .collect();
        d.sort_unstable();
        d
    }

    /// Encode-to-delivery delay of every fully delivered frame of `flow`.
    pub fn frame_delays(&self, flow: Option<FlowId>) -> Vec<Micros> {
        self.frames
            .iter()
            .filter(|f| flow.is_none_or(|id| f.flow == id))
            .filter_map(|f| f.delivered.map(|d| d - f.encode_time))
            .collect()
    }

    pub fn fallback_seen(&self, flow: FlowId) -> bool {
        self.flow_snapshots(flow)
            .any(|s| s.mode == SendMode::Fallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stalling {
    pub ratio: f64,
    /// Fewer than two deliveries; `ratio` is 0 by convention.
    pub insufficient: bool,
}

/// Each gap between consecutive deliveries adds its excess over 200 ms to the
/// stall time, which is divided by `span`.
pub fn stalling_ratio(deliveries: &[Micros], span: Micros) -> Stalling {
    if deliveries.len() < 2 || span == 0 {
        return Stalling {
            ratio: 0.0,
            insufficient: true,
        };
    }
    let stalled: Micros = deliveries
        .windows(2)
        .map(|w| w[1].saturating_sub(w[0]).saturating_sub(STALL_THRESHOLD))
        .sum();
    Stalling {
        ratio: (stalled as f64 / span as f64).min(1.0),
        insufficient: false,
    }
}

/// Accuracy of one estimate against the true rate, floored at 0.
pub fn estimate_accuracy(estimate: f64, truth: f64) -> f64 {
    (1.0 - (estimate - truth).abs() / truth).max(0.0)
}

/// Mean per-snapshot accuracy of the bandwidth estimate over `[from, to)`.
/// A snapshot without an estimate scores 0. `None` when no snapshot falls in
/// the window.
pub fn bw_estimation_accuracy<'a>(
    snapshots: impl IntoIterator<Item = &'a Snapshot>,
    truth: &RateSchedule,
    from: Micros,
    to: Micros,
) -> Option<f64> {
    let (sum, n) = snapshots
        .into_iter()
        .filter(|s| s.time >= from && s.time < to)
        .fold((0.0, 0usize), |(sum, n), s| {
            let acc = s
                .est_bandwidth
                .map_or(0.0, |e| estimate_accuracy(e, truth.rate_at(s.time) as f64));
            (sum + acc, n + 1)
        });
    (n > 0).then(|| sum / n as f64)
}

/// Jain's index `(Σx)² / (n·Σx²)`.
pub fn fairness_index(throughputs: &[f64]) -> Result<f64, MetricsError> {
    if throughputs.is_empty() {
        return Err(MetricsError::NoFlows);
    }
    let sum: f64 = throughputs.iter().sum();
    let sq: f64 = throughputs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (throughputs.len() as f64 * sq))
}

/// Fraction of positions where `predicted` matches `truth`.
pub fn signal_accuracy(predicted: &[bool], truth: &[bool]) -> Result<f64, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Delivered media bytes with arrival in `[from, to)`, as bits per second.
pub fn media_bitrate(log: &RunLog, flow: Option<FlowId>, from: Micros, to: Micros) -> f64 {
    if to <= from {
        return 0.0;
    }
    let bytes: u64 = log
        .packets
        .iter()
        .filter(|p| flow.is_none_or(|id| p.flow == id))
        .filter(|p| p.recv_time.is_some_and(|t| t >= from && t < to))
        .map(|p| p.size)
        .sum();
    bytes as f64 * 8.0 * SECOND as f64 / (to - from) as f64
}

/// Nearest-rank percentile; `q` in `[0, 1]`.
pub fn percentile(values: &[Micros], q: f64) -> Option<Micros> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Flat summary written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub media_bitrate: f64,
    pub frame_delay_p50: Option<Micros>,
    pub frame_delay_p95: Option<Micros>,
    pub stalling_ratio: f64,
    pub bw_estimation_accuracy: Option<f64>,
    pub fairness_index: Option<f64>,
    pub flows: usize,
    pub frames_encoded: usize,
    pub frames_delivered: usize,
    pub packets_sent: usize,
    pub packets_lost: usize,
    pub app_drops: u64,
    pub fallback_entries: u64,
    pub steady_state_max_burst: Option<f64>,
    pub invariant_violations: u64,
}

impl MetricsReport {
    pub fn from_log(log: &RunLog) -> Self {
        let span = log.duration;
        let delays = log.frame_delays(None);
        let stalls: Vec<f64> = log
            .flows
            .iter()
            .map(|f| stalling_ratio(&log.deliveries(f.id), span.saturating_sub(f.start)).ratio)
            .collect();
        let accuracies: Vec<f64> = log
            .flows
            .iter()
            .filter_map(|f| {
                bw_estimation_accuracy(
                    log.flow_snapshots(f.id),
                    &log.link_rate,
                    f.start + ACCURACY_WARMUP,
                    span,
                )
            })
            .collect();
        let shared_from = log.flows.iter().map(|f| f.start).max().unwrap_or(0);
        let shares: Vec<f64> = log
            .flows
            .iter()
            .map(|f| media_bitrate(log, Some(f.id), shared_from, span))
            .collect();
        MetricsReport {
            media_bitrate: media_bitrate(log, None, 0, span),
            frame_delay_p50: percentile(&delays, 0.5),
            frame_delay_p95: percentile(&delays, 0.95),
            stalling_ratio: mean(&stalls).unwrap_or(0.0),
            bw_estimation_accuracy: mean(&accuracies),
            fairness_index: fairness_index(&shares).ok(),
            flows: log.flows.len(),
            frames_encoded: log.frames.len(),
            frames_delivered: log.frames.iter().filter(|f| f.delivered.is_some()).count(),
            packets_sent: log.packets.len(),
            packets_lost: log.packets.iter().filter(|p| p.drop.is_some()).count(),
            app_drops: log.counters.iter().map(|c| c.app_drops).sum(),
            fallback_entries: log.counters.iter().map(|c| c.fallback_entries).sum(),
            steady_state_max_burst: steady_state_max_burst(log),
            invariant_violations: log.violation_count,
        }
    }
}

/// Time-averaged burst cap over the second half of the run, across flows.
pub fn steady_state_max_burst(log: &RunLog) -> Option<f64> {
    let from = log.duration / 2;
    let m: Vec<f64> = log
        .snapshots
        .iter()
        .filter(|s| s.time >= from)
        .map(|s| s.max_burst as f64)
        .collect();
    mean(&m)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
