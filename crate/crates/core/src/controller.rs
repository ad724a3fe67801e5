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

//! Sender-side rate and window control.
//!
//! Frames are admitted against `cwnd = γ · BDP̂`, cut into bursts no longer
//! than the current burst cap and sent as back-to-back packet trains. When
//! burst control gives up on bursting, the sender switches to a paced
//! delay-gradient AIMD mode until burst control recovers.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::burst::{max_burst, update_m, BurstConfig, BurstLengthState, IntervalLossStats};
use crate::detector::{
    detect, target_bitrate, time_gradient, update_gamma, DetectorConfig, GammaState, SignalSample,
    SignalWindow,
};
use crate::estimator::{
    combine_trains, frame_delay, train_sample, EstimatorWindows, FrameSample, ReorderPolicy,
    TrainSample, DEFAULT_BW_WINDOW, DEFAULT_RTPROP_WINDOW,
};
use crate::types::{
    serialization_time, FeedbackEntry, FeedbackReport, FlowId, Frame, Micros, DEFAULT_MTU,
    MILLISECOND, SECOND,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    #[default]
    Camel,
    /// Paced AIMD only; never bursts.
    FallbackOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SendMode {
    Burst,
    Fallback,
}

impl std::fmt::Display for SendMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SendMode::Burst => "burst",
            SendMode::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallbackConfig {
    /// Delay growth over time that counts as overuse, in µs per second.
    pub overuse_us_per_s: f64,
    pub decrease_factor: f64,
    pub additive_bps_per_s: f64,
    pub rate_min_bps: f64,
    /// Minimum spacing between two multiplicative decreases.
    pub decrease_holdoff_us: Micros,
}

impl Default for FallbackConfig {
    fn default() -> Self {
        FallbackConfig {
            overuse_us_per_s: 2_000.0,
            decrease_factor: 0.85,
            additive_bps_per_s: 50_000.0,
            rate_min_bps: 100_000.0,
            decrease_holdoff_us: 500 * MILLISECOND,
        }
    }
}

/// One AIMD step. `elapsed` prorates the additive increase.
pub fn fallback_step(rate: f64, overuse: bool, elapsed: Micros, cfg: &FallbackConfig) -> f64 {
    if overuse {
        rate * cfg.decrease_factor
    } else {
        rate + cfg.additive_bps_per_s * elapsed as f64 / SECOND as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub mtu: u64,
    pub initial_bitrate_bps: f64,
    pub initial_cwnd_packets: u64,
    pub cwnd_min_packets: u64,
    pub cwnd_max_bytes: u64,
    pub bw_window_us: Micros,
    pub rtprop_window_us: Micros,
    /// A frame still unreported after this many later reports is lost.
    pub reorder_guard_frames: u32,
    /// Bytes of not-yet-started frames the sender may hold.
    pub pending_capacity_bytes: u64,
    pub reorder_policy: ReorderPolicy,
    pub fallback: FallbackConfig,
    pub detector: DetectorConfig,
    pub burst: BurstConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            mtu: DEFAULT_MTU,
            initial_bitrate_bps: 300_000.0,
            initial_cwnd_packets: 10,
            cwnd_min_packets: 4,
            cwnd_max_bytes: 10_000_000,
            bw_window_us: DEFAULT_BW_WINDOW,
            rtprop_window_us: DEFAULT_RTPROP_WINDOW,
            reorder_guard_frames: 3,
            pending_capacity_bytes: 200_000,
            reorder_policy: ReorderPolicy::Lenient,
            fallback: FallbackConfig::default(),
            detector: DetectorConfig::default(),
            burst: BurstConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn cwnd_min(&self) -> u64 {
        self.cwnd_min_packets * self.mtu
    }
}

/// A packet the sender hands to the network now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutPacket {
    pub frame_id: u64,
    pub seq_in_frame: u32,
    pub packets_in_frame: u32,
    pub size: u64,
    /// Byte offset of the packet inside its burst.
    pub burst_offset: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SendDecision {
    pub packets: Vec<OutPacket>,
    pub next_wakeup: Option<Micros>,
}

/// Controller state as sampled for the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: Micros,
    pub flow: FlowId,
    pub cwnd: u64,
    pub inflight: u64,
    pub gamma: f64,
    pub max_burst: u64,
    pub mode: SendMode,
    pub est_bandwidth: Option<f64>,
    pub target_bitrate: f64,
    pub min_delay: Option<Micros>,
    pub fallback_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SentPacket {
    size: u64,
    send_time: Micros,
    burst_offset: u64,
    burst: u32,
}

#[derive(Debug, Clone)]
struct Outgoing {
    frame: Frame,
    next_packet: usize,
    started: bool,
}

#[derive(Debug, Clone)]
struct InFlightFrame {
    packets: Vec<SentPacket>,
    inflight_at_send: u64,
    outstanding: u64,
    later_reports: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerCounters {
    pub app_drops: u64,
    pub unknown_reports: u64,
    pub guard_losses: u64,
    pub fallback_entries: u64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    kind: ControllerKind,
    flow: FlowId,
    mode: SendMode,
    cwnd: u64,
    inflight: u64,
    windows: EstimatorWindows,
    signal: SignalWindow,
    gamma: GammaState,
    burst: BurstLengthState,
    loss_stats: IntervalLossStats,
    fallback_rate: f64,
    last_fallback_update: Micros,
    last_decrease: Option<Micros>,
    pending: VecDeque<Outgoing>,
    in_flight: BTreeMap<u64, InFlightFrame>,
    next_send: Micros,
    srtt: Option<Micros>,
    frame_interval: Micros,
    last_frame_at: Option<Micros>,
    last_target: Option<f64>,
    last_bw: Option<f64>,
    last_sample: Option<FrameSample>,
    next_burst: u32,
    /// cwnd and frame size at the most recent admission.
    admitted: Option<(u64, u64)>,
    counters: ControllerCounters,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, kind: ControllerKind, flow: FlowId, now: Micros) -> Self {
        let mode = match kind {
            ControllerKind::Camel => SendMode::Burst,
            ControllerKind::FallbackOnly => SendMode::Fallback,
        };
        Controller {
            kind,
            flow,
            mode,
            cwnd: cfg.initial_cwnd_packets * cfg.mtu,
            inflight: 0,
            windows: EstimatorWindows::new(cfg.bw_window_us, cfg.rtprop_window_us),
            signal: SignalWindow::new(cfg.detector.window_us),
            gamma: GammaState::default(),
            burst: BurstLengthState::new(&cfg.burst, now),
            loss_stats: IntervalLossStats::new(cfg.burst.interval_width, now),
            fallback_rate: cfg.initial_bitrate_bps,
            last_fallback_update: now,
            last_decrease: None,
            pending: VecDeque::new(),
            in_flight: BTreeMap::new(),
            next_send: now,
            srtt: None,
            frame_interval: 33 * MILLISECOND,
            last_frame_at: None,
            last_target: None,
            last_bw: None,
            last_sample: None,
            next_burst: 0,
            admitted: None,
            counters: ControllerCounters::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn mode(&self) -> SendMode {
        self.mode
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn inflight(&self) -> u64 {
        self.inflight
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.gamma
    }

    pub fn burst_state(&self) -> &BurstLengthState {
        &self.burst
    }

    pub fn estimator(&self) -> &EstimatorWindows {
        &self.windows
    }

    pub fn fallback_rate(&self) -> f64 {
        self.fallback_rate
    }

    pub fn counters(&self) -> ControllerCounters {
        self.counters
    }

    pub fn pending_frames(&self) -> usize {
        self.pending.len()
    }

    /// Upper bound on inflight implied by the last admission, while bursting.
    pub fn window_bound(&self) -> Option<u64> {
        match self.mode {
            SendMode::Burst => self.admitted.map(|(cwnd, size)| cwnd + size),
            SendMode::Fallback => None,
        }
    }

    /// Bitrate the encoder should aim for.
    pub fn app_target_bitrate(&self) -> f64 {
        if self.mode == SendMode::Fallback {
            return self.fallback_rate;
        }
        match self.windows.avg_bandwidth() {
            Some(bw) => target_bitrate(self.gamma.gamma, bw),
            None => self.last_target.unwrap_or(self.cfg.initial_bitrate_bps),
        }
    }

    pub fn snapshot(&self, now: Micros) -> Snapshot {
        Snapshot {
            time: now,
            flow: self.flow,
            cwnd: self.cwnd,
            inflight: self.inflight,
            gamma: self.gamma.gamma,
            max_burst: max_burst(&self.burst),
            mode: self.mode,
            est_bandwidth: self.windows.avg_bandwidth(),
            target_bitrate: self.app_target_bitrate(),
            min_delay: self.windows.min_delay(),
            fallback_rate: self.fallback_rate,
        }
    }

    pub fn on_frame(&mut self, frame: Frame, now: Micros) -> SendDecision {
        if let Some(prev) = self.last_frame_at {
            let gap = now.saturating_sub(prev);
            if gap > 0 {
                self.frame_interval = (self.frame_interval * 7 + gap) / 8;
            }
        }
        self.last_frame_at = Some(now);

        let mut queued: u64 = self
            .pending
            .iter()
            .filter(|o| !o.started)
            .map(|o| o.frame.size)
            .sum();
        while queued + frame.size > self.cfg.pending_capacity_bytes {
            let Some(idx) = self.pending.iter().position(|o| !o.started) else {
                break;
            };
            let dropped = self.pending.remove(idx).expect("index in range");
            queued -= dropped.frame.size;
            self.counters.app_drops += 1;
            log::debug!(
                "{}: dropping queued frame {}",
                self.flow,
                dropped.frame.frame_id
            );
        }
        self.pending.push_back(Outgoing {
            frame,
            next_packet: 0,
            started: false,
        });
        self.try_send(now)
    }

    pub fn on_timer(&mut self, now: Micros) -> SendDecision {
        self.try_send(now)
    }

    pub fn on_feedback(&mut self, report: &FeedbackReport, now: Micros) -> SendDecision {
        let Some(sent) = self.in_flight.remove(&report.frame_id) else {
            self.counters.unknown_reports += 1;
            return self.try_send(now);
        };
        self.inflight -= sent.outstanding;

        let mut by_burst: BTreeMap<u32, (Vec<FeedbackEntry>, Vec<u64>)> = BTreeMap::new();
        let mut send_times = Vec::with_capacity(report.entries.len());
        for entry in &report.entries {
            let Some(p) = sent.packets.get(entry.seq_in_frame as usize) else {
                continue;
            };
            self.loss_stats.record_packet(p.burst_offset, entry.lost());
            let slot = by_burst.entry(p.burst).or_default();
            slot.0.push(*entry);
            slot.1.push(p.size);
            send_times.push(p.send_time);
        }
        let trains: Vec<TrainSample> = by_burst
            .values()
            .filter_map(|(e, s)| train_sample(e, s, self.cfg.reorder_policy).ok().flatten())
            .collect();
        let bandwidth = combine_trains(&trains);
        let delay = frame_delay(report, &send_times);

        if let Some(delay) = delay {
            let sample = FrameSample {
                frame_id: report.frame_id,
                bandwidth,
                delay,
                inflight_at_send: sent.inflight_at_send,
                sample_time: now,
            };
            self.windows.push(&sample);
            self.last_sample = Some(sample);
            self.signal.push(SignalSample {
                inflight: sent.inflight_at_send,
                delay,
                time: now,
            });
            self.srtt = Some(match self.srtt {
                Some(s) => (s * 7 + delay) / 8,
                None => delay,
            });
        }

        self.expire_unreported(report.frame_id);

        if let Some(bw) = self.windows.avg_bandwidth() {
            self.last_bw = Some(bw);
            let verdict = detect(&self.signal, bw, self.cfg.detector.k_thresh);
            self.gamma = update_gamma(self.gamma, &verdict, self.cfg.detector.gamma_floor, now);
            self.last_target = Some(target_bitrate(self.gamma.gamma, bw));
        }

        if self.kind == ControllerKind::Camel {
            let was = self.burst.fallback_active;
            self.burst = update_m(&self.burst, &mut self.loss_stats, now, &self.cfg.burst);
            if self.burst.fallback_active != was {
                self.switch_mode(now);
            }
        }
        if self.mode == SendMode::Fallback {
            self.fallback_update(now);
        }

        if let Ok(bdp) = self.windows.bdp_estimate() {
            let scaled = (self.gamma.gamma * bdp.bytes as f64) as u64;
            self.cwnd = scaled.clamp(self.cfg.cwnd_min(), self.cfg.cwnd_max_bytes);
        }
        self.try_send(now)
    }

    /// The estimator sample produced by the latest feedback, if any.
    pub fn take_sample(&mut self) -> Option<FrameSample> {
        self.last_sample.take()
    }

    /// Delay-gradient AIMD on the paced rate.
    pub fn fallback_update(&mut self, now: Micros) {
        let elapsed = now.saturating_sub(self.last_fallback_update);
        self.last_fallback_update = now;
        let g = time_gradient(&self.signal);
        let overuse = !g.degenerate && g.slope > self.cfg.fallback.overuse_us_per_s;
        let held = overuse
            && self
                .last_decrease
                .is_some_and(|t| now.saturating_sub(t) < self.cfg.fallback.decrease_holdoff_us);
        if !held {
            self.fallback_rate =
                fallback_step(self.fallback_rate, overuse, elapsed, &self.cfg.fallback);
            if overuse {
                self.last_decrease = Some(now);
            }
        }
        let cap = self.windows.avg_bandwidth().unwrap_or(f64::INFINITY);
        self.fallback_rate = self
            .fallback_rate
            .min(cap)
            .max(self.cfg.fallback.rate_min_bps);
    }

    fn switch_mode(&mut self, now: Micros) {
        self.admitted = None;
        if self.burst.fallback_active {
            self.fallback_rate = self.app_target_bitrate();
            self.last_fallback_update = now;
            self.last_decrease = None;
            self.mode = SendMode::Fallback;
            self.counters.fallback_entries += 1;
            log::info!(
                "{}: entering paced fallback at {:.0} b/s",
                self.flow,
                self.fallback_rate
            );
        } else {
            self.mode = SendMode::Burst;
            log::info!("{}: resuming bursts", self.flow);
        }
    }

    /// Frames that stayed unreported while `reorder_guard_frames` later frames
    /// were reported are written off as lost.
    fn expire_unreported(&mut self, reported: u64) {
        let mut expired = vec![];
        for (&id, f) in self.in_flight.range_mut(..reported) {
            f.later_reports += 1;
            if f.later_reports >= self.cfg.reorder_guard_frames {
                expired.push(id);
            }
        }
        for id in expired {
            let f = self.in_flight.remove(&id).expect("present");
            self.inflight -= f.outstanding;
            for p in &f.packets {
                self.loss_stats.record_packet(p.burst_offset, true);
            }
            self.counters.guard_losses += 1;
        }
    }

    fn pace_rate(&self) -> f64 {
        self.windows
            .avg_bandwidth()
            .or(self.last_bw)
            .unwrap_or(self.cfg.initial_bitrate_bps)
    }

    fn try_send(&mut self, now: Micros) -> SendDecision {
        let mut out = SendDecision::default();
        while let Some(front) = self.pending.front() {
            if now < self.next_send {
                out.next_wakeup = Some(self.next_send);
                break;
            }
            if !front.started {
                let window_open = self.mode == SendMode::Fallback
                    || self.inflight < self.cwnd
                    || self.inflight == 0;
                if !window_open {
                    break;
                }
                self.admit(now);
            }
            match self.mode {
                SendMode::Burst => self.send_chunk(now, &mut out),
                SendMode::Fallback => self.send_paced(now, &mut out),
            }
        }
        out
    }

    fn admit(&mut self, _now: Micros) {
        let front = self.pending.front_mut().expect("front exists");
        front.started = true;
        self.admitted = Some((self.cwnd, front.frame.size));
        self.in_flight.insert(
            front.frame.frame_id,
            InFlightFrame {
                packets: Vec::with_capacity(front.frame.packet_count()),
                inflight_at_send: self.inflight,
                outstanding: 0,
                later_reports: 0,
            },
        );
    }

    fn emit(&mut self, now: Micros, offset: u64, out: &mut SendDecision) -> u64 {
        let burst = self.next_burst;
        let front = self.pending.front_mut().expect("front exists");
        let seq = front.next_packet;
        let size = front.frame.packets[seq];
        front.next_packet += 1;
        let frame_id = front.frame.frame_id;
        out.packets.push(OutPacket {
            frame_id,
            seq_in_frame: seq as u32,
            packets_in_frame: front.frame.packets.len() as u32,
            size,
            burst_offset: offset,
        });
        let f = self.in_flight.get_mut(&frame_id).expect("admitted frame");
        f.packets.push(SentPacket {
            size,
            send_time: now,
            burst_offset: offset,
            burst,
        });
        f.outstanding += size;
        self.inflight += size;
        size
    }

    fn finish_frame_if_done(&mut self) -> bool {
        let front = self.pending.front().expect("front exists");
        if front.next_packet == front.frame.packets.len() {
            self.pending.pop_front();
            true
        } else {
            false
        }
    }

    fn send_chunk(&mut self, now: Micros, out: &mut SendDecision) {
        let cap = max_burst(&self.burst);
        let mut bytes = 0;
        loop {
            let front = self.pending.front().expect("front exists");
            let Some(&size) = front.frame.packets.get(front.next_packet) else {
                break;
            };
            if bytes > 0 && bytes + size > cap {
                break;
            }
            bytes += self.emit(now, bytes, out);
        }
        self.next_burst = self.next_burst.wrapping_add(1);

        let rate = self.pace_rate().max(1.0) as u64;
        let drain = serialization_time(bytes, rate);
        let gap = if self.finish_frame_if_done() {
            drain
        } else {
            let front = self.pending.front().expect("front exists");
            let remaining = chunk_count(&front.frame.packets[front.next_packet..], cap).max(1);
            let horizon = self
                .srtt
                .map_or(self.frame_interval, |s| s.min(self.frame_interval));
            drain.max(horizon / remaining as u64)
        };
        self.next_send = now + gap.max(1);
    }

    fn send_paced(&mut self, now: Micros, out: &mut SendDecision) {
        let size = self.emit(now, 0, out);
        self.next_burst = self.next_burst.wrapping_add(1);
        self.finish_frame_if_done();
        let rate = self.fallback_rate.max(1.0) as u64;
        self.next_send = now + serialization_time(size, rate).max(1);
    }
}

/// Number of bursts `packets` split into under cap `cap`.
pub fn chunk_count(packets: &[u64], cap: u64) -> usize {
    let mut chunks = 0;
    let mut bytes = 0;
    for &p in packets {
        if bytes > 0 && bytes + p > cap {
            chunks += 1;
            bytes = 0;
        }
        bytes += p;
    }
    chunks + usize::from(bytes > 0)
}
