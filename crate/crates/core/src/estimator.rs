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

//! Frame-level bandwidth and delay estimation.
//!
//! Every frame (or every back-to-back burst of a frame) is a packet train. The
//! arrival spacing of the train at the receiver gives the bottleneck rate `B`,
//! and the RTT of the first received packet gives the frame delay `D`, which is
//! not inflated by the queue the frame itself builds. The BDP estimate is
//! `avg(B) * min(D)` over sliding windows.
//!
//! `avg(B)` is an unweighted mean over frames: each frame contributes one
//! sample regardless of how long its train was.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FeedbackEntry, FeedbackReport, Micros, SECOND};

pub const DEFAULT_BW_WINDOW: Micros = 5 * SECOND;
pub const DEFAULT_RTPROP_WINDOW: Micros = 10 * SECOND;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("reordered feedback")]
    ReorderedFeedback,
    #[error("cold start")]
    ColdStart,
    #[error("feedback has {entries} entries but {sizes} packet sizes")]
    LengthMismatch { entries: usize, sizes: usize },
}

/// How to treat receive times that go backwards inside one train.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReorderPolicy {
    Strict,
    /// Use the earliest and latest arrival as the train span.
    #[default]
    Lenient,
}

/// Raw packet-train measurement: bytes that arrived after the first received
/// packet, and the arrival span they took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSample {
    pub bytes: u64,
    pub span: Micros,
}

impl TrainSample {
    pub fn rate_bps(&self) -> f64 {
        self.bytes as f64 * 8.0 * SECOND as f64 / self.span as f64
    }
}

/// Measures one packet train.
///
/// Only received packets count. The first received packet opens the train and
/// its bytes are excluded; the span runs from its arrival to the last arrival.
/// Returns `None` with fewer than two received packets or a zero span.
pub fn train_sample(
    entries: &[FeedbackEntry],
    sizes: &[u64],
    policy: ReorderPolicy,
) -> Result<Option<TrainSample>, EstimatorError> {
    if entries.len() != sizes.len() {
        return Err(EstimatorError::LengthMismatch {
            entries: entries.len(),
            sizes: sizes.len(),
        });
    }
    let mut received = entries
        .iter()
        .zip(sizes)
        .filter_map(|(e, &s)| e.recv_time.map(|t| (t, s)));
    let Some((first_t, _)) = received.next() else {
        return Ok(None);
    };
    let mut bytes = 0;
    let mut count = 1;
    let (mut lo, mut hi, mut last) = (first_t, first_t, first_t);
    for (t, s) in received {
        if t < last && policy == ReorderPolicy::Strict {
            return Err(EstimatorError::ReorderedFeedback);
        }
        bytes += s;
        count += 1;
        lo = lo.min(t);
        hi = hi.max(t);
        last = t;
    }
    let span = hi - lo;
    if count < 2 || span == 0 {
        return Ok(None);
    }
    Ok(Some(TrainSample { bytes, span }))
}

/// Frame-level bandwidth in bits per second.
pub fn frame_bandwidth(
    entries: &[FeedbackEntry],
    sizes: &[u64],
    policy: ReorderPolicy,
) -> Result<Option<f64>, EstimatorError> {
    Ok(train_sample(entries, sizes, policy)?.map(|t| t.rate_bps()))
}

/// Combines the trains of a multi-burst frame: total bytes over total span.
/// Gaps between bursts are excluded, so pacing does not dilute the estimate.
pub fn combine_trains(trains: &[TrainSample]) -> Option<f64> {
    let bytes: u64 = trains.iter().map(|t| t.bytes).sum();
    let span: Micros = trains.iter().map(|t| t.span).sum();
    (span > 0).then(|| TrainSample { bytes, span }.rate_bps())
}

/// Frame-level delay: RTT of the lowest-sequence received packet.
///
/// `send_times` is aligned with `report.entries`. When the first packet is
/// lost the next received one stands in for it.
pub fn frame_delay(report: &FeedbackReport, send_times: &[Micros]) -> Option<Micros> {
    report
        .entries
        .iter()
        .zip(send_times)
        .find(|(e, _)| !e.lost())
        .and_then(|(e, &sent)| report.packet_rtt(e, sent))
}

/// One per-frame estimator output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub frame_id: u64,
    pub bandwidth: Option<f64>,
    pub delay: Micros,
    pub inflight_at_send: u64,
    pub sample_time: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BdpEstimate {
    pub bytes: u64,
    /// Set when `min(D)` was zero.
    pub degenerate: bool,
}

/// `avg_bps * min_delay / 8`, floored to whole bytes.
pub fn bdp_from(avg_bps: f64, min_delay: Micros) -> BdpEstimate {
    let bits = avg_bps.max(0.0) * min_delay as f64 / SECOND as f64;
    BdpEstimate {
        bytes: (bits / 8.0).floor() as u64,
        degenerate: min_delay == 0,
    }
}

/// Sliding windows over recent frame samples.
#[derive(Debug, Clone)]
pub struct EstimatorWindows {
    bw_horizon: Micros,
    delay_horizon: Micros,
    bandwidth: VecDeque<(Micros, f64)>,
    delay: VecDeque<(Micros, Micros)>,
}

impl Default for EstimatorWindows {
    fn default() -> Self {
        Self::new(DEFAULT_BW_WINDOW, DEFAULT_RTPROP_WINDOW)
    }
}

impl EstimatorWindows {
    pub fn new(bw_horizon: Micros, delay_horizon: Micros) -> Self {
        EstimatorWindows {
            bw_horizon,
            delay_horizon,
            bandwidth: VecDeque::new(),
            delay: VecDeque::new(),
        }
    }

    pub fn push(&mut self, sample: &FrameSample) {
        let t = sample.sample_time;
        if let Some(bw) = sample.bandwidth {
            self.bandwidth.push_back((t, bw));
        }
        self.delay.push_back((t, sample.delay));
        self.expire(t);
    }

    fn expire(&mut self, newest: Micros) {
        while let Some(&(t, _)) = self.bandwidth.front() {
            if newest.saturating_sub(t) <= self.bw_horizon {
                break;
            }
            self.bandwidth.pop_front();
        }
        while let Some(&(t, _)) = self.delay.front() {
            if newest.saturating_sub(t) <= self.delay_horizon {
                break;
            }
            self.delay.pop_front();
        }
    }

    pub fn avg_bandwidth(&self) -> Option<f64> {
        if self.bandwidth.is_empty() {
            return None;
        }
        let n = self.bandwidth.len() as f64;
        Some(self.bandwidth.iter().map(|&(_, b)| b).sum::<f64>() / n)
    }

    pub fn min_delay(&self) -> Option<Micros> {
        self.delay.iter().map(|&(_, d)| d).min()
    }

    pub fn bandwidth_samples(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn delay_samples(&self) -> usize {
        self.delay.len()
    }

    /// Oldest and newest sample times in the bandwidth window.
    pub fn bandwidth_span(&self) -> Option<(Micros, Micros)> {
        Some((self.bandwidth.front()?.0, self.bandwidth.back()?.0))
    }

    pub fn delay_span(&self) -> Option<(Micros, Micros)> {
        Some((self.delay.front()?.0, self.delay.back()?.0))
    }

    pub fn bw_horizon(&self) -> Micros {
        self.bw_horizon
    }

    pub fn delay_horizon(&self) -> Micros {
        self.delay_horizon
    }

    pub fn bdp_estimate(&self) -> Result<BdpEstimate, EstimatorError> {
        match (self.avg_bandwidth(), self.min_delay()) {
            (Some(bw), Some(d)) => Ok(bdp_from(bw, d)),
            _ => Err(EstimatorError::ColdStart),
        }
    }
}
