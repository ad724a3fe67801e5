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

//! Shared domain types: packets, frames, feedback reports and the simulated
//! clock.
//!
//! All times are integer microseconds and all sizes integer bytes. Rates are
//! bits per second at API boundaries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in microseconds.
pub type Micros = u64;

/// One second in microseconds.
pub const SECOND: Micros = 1_000_000;

/// One millisecond in microseconds.
pub const MILLISECOND: Micros = 1_000;

/// Default payload MTU in bytes.
pub const DEFAULT_MTU: u64 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketizeError {
    #[error("empty frame")]
    EmptyFrame,
    #[error("mtu must be at least one byte")]
    ZeroMtu,
}

/// Splits a frame into packet sizes: every packet but the last is exactly
/// `mtu` bytes.
pub fn packetize(frame_size: u64, mtu: u64) -> Result<Vec<u64>, PacketizeError> {
    if frame_size == 0 {
        return Err(PacketizeError::EmptyFrame);
    }
    if mtu == 0 {
        return Err(PacketizeError::ZeroMtu);
    }
    let full = frame_size / mtu;
    let rest = frame_size % mtu;
    let mut sizes = vec![mtu; full as usize];
    if rest > 0 {
        sizes.push(rest);
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow_id: FlowId,
    pub frame_id: u64,
    /// 1-based position inside the frame.
    pub seq_in_frame: u32,
    pub size: u64,
    pub send_time: Micros,
    pub recv_time: Option<Micros>,
    pub lost: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameKind::I => f.write_str("I"),
            FrameKind::P => f.write_str("P"),
        }
    }
}

/// An encoded video frame and its packetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_id: u64,
    pub kind: FrameKind,
    pub size: u64,
    /// Packet sizes in sequence order, `packets[0]` has `seq_in_frame == 1`.
    pub packets: Vec<u64>,
    pub encode_time: Micros,
}

impl Frame {
    pub fn new(
        frame_id: u64,
        kind: FrameKind,
        size: u64,
        mtu: u64,
        encode_time: Micros,
    ) -> Result<Self, PacketizeError> {
        let packets = packetize(size, mtu)?;
        Ok(Frame {
            frame_id,
            kind,
            size,
            packets,
            encode_time,
        })
    }

    pub fn packet_count(&self) -> usize {
        self.packets.len()
    }
}

/// Receiver-side status of one packet of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackEntry {
    pub seq_in_frame: u32,
    /// `None` when the packet was lost.
    pub recv_time: Option<Micros>,
}

impl FeedbackEntry {
    pub fn lost(&self) -> bool {
        self.recv_time.is_none()
    }
}

/// Per-frame receiver report.
///
/// `report_send_time` is the receiver timestamp when the report left; the
/// sender subtracts the receiver hold time from the report's round trip to get
/// a per-packet RTT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackReport {
    pub flow_id: FlowId,
    pub frame_id: u64,
    pub entries: Vec<FeedbackEntry>,
    pub report_send_time: Micros,
    pub report_arrival_time: Micros,
}

impl FeedbackReport {
    pub fn received_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.lost()).count()
    }

    /// RTT of the packet described by `entry`, given when it was sent.
    pub fn packet_rtt(&self, entry: &FeedbackEntry, send_time: Micros) -> Option<Micros> {
        let recv = entry.recv_time?;
        let hold = self.report_send_time.saturating_sub(recv);
        Some(
            self.report_arrival_time
                .saturating_sub(send_time)
                .saturating_sub(hold),
        )
    }
}

/// Monotone simulated clock. Only the event loop advances it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Micros,
}

impl SimClock {
    pub fn now(&self) -> Micros {
        self.now
    }

    /// Moves the clock to `t`. Panics if `t` is in the past, which would mean
    /// the event queue handed out events out of order.
    pub fn advance_to(&mut self, t: Micros) {
        assert!(
            t >= self.now,
            "clock moved backwards: {} -> {}",
            self.now,
            t
        );
        self.now = t;
    }
}

/// Converts a byte count moved over `dur` microseconds into bits per second.
pub fn rate_bps(bytes: u64, dur: Micros) -> f64 {
    if dur == 0 {
        return 0.0;
    }
    bytes as f64 * 8.0 * SECOND as f64 / dur as f64
}

/// Serialization time of `bytes` at `rate_bps`, rounded up to whole
/// microseconds.
pub fn serialization_time(bytes: u64, rate_bps: u64) -> Micros {
    debug_assert!(rate_bps > 0);
    let bits = bytes as u128 * 8 * SECOND as u128;
    bits.div_ceil(rate_bps as u128) as Micros
}
