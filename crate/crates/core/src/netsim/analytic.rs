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

//! Closed-form queuing model: the RTT equals RTprop until inflight exceeds the
//! BDP, then grows by the serialization time of the excess bytes.

use crate::types::{Micros, SECOND};

/// RTT in microseconds for `inflight` bytes on a link of `bandwidth_bps` with
/// propagation RTT `rtprop` and BDP `bdp` bytes. `inflight == bdp` is still
/// uncongested.
pub fn analytic_rtt(inflight: u64, bandwidth_bps: u64, rtprop: Micros, bdp: u64) -> Micros {
    if inflight <= bdp {
        return rtprop;
    }
    let excess_bits = (inflight - bdp) as u128 * 8;
    rtprop + (excess_bits * SECOND as u128 / bandwidth_bps as u128) as Micros
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub rtprop: Micros,
}

impl LinkParams {
    pub fn bdp_bytes(&self) -> u64 {
        (self.bandwidth_bps as u128 * self.rtprop as u128 / SECOND as u128 / 8) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracePoint {
    pub inflight: u64,
    pub rtt: Micros,
    pub congested: bool,
}

/// Applies the model to every inflight value; a point is congested when its
/// RTT exceeds RTprop.
pub fn synth_trace(inflight: &[u64], link: LinkParams) -> Vec<TracePoint> {
    let bdp = link.bdp_bytes();
    inflight
        .iter()
        .map(|&i| {
            let rtt = analytic_rtt(i, link.bandwidth_bps, link.rtprop, bdp);
            TracePoint {
                inflight: i,
                rtt,
                congested: rtt > link.rtprop,
            }
        })
        .collect()
}
