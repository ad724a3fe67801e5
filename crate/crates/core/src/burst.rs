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

//! Burst length control.
//!
//! Packets are bucketed by their byte offset inside the burst that carried
//! them, in 2 KB intervals. Loss in interval 0 approximates the physical loss
//! rate `L0`, because a drop-tail buffer only overflows on the tail of a
//! burst. Every 5 s the burst cap `M` moves one 2 KB step: down if the deepest
//! interval bursts reached loses noticeably more than `L0`, up otherwise.
//!
//! The "current interval" is the deepest interval at or below the one holding
//! byte `M - 1` that saw traffic this epoch. When it carries fewer than
//! `min_interval_samples` packets, shallower intervals (never interval 0) are
//! pooled into it so a handful of physically lost packets cannot pass for
//! overflow.
//!
//! Landing on `M_min` while still lossy switches the flow to the paced
//! fallback. Interval 0 coincides with the `M_min` interval, so the lossy test
//! cannot be re-evaluated once `M == M_min`; the step onto the floor is the
//! last point where tail loss is observable. Fallback ends after
//! `n_recover` consecutive clean epochs, resuming bursts at `M_min`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Micros, SECOND};

pub const INTERVAL_WIDTH: u64 = 2048;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BurstError {
    #[error("cold epoch")]
    ColdEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    pub m_init: u64,
    pub m_min: u64,
    pub m_max: u64,
    pub step: u64,
    pub interval_width: u64,
    pub epoch_us: Micros,
    /// Loss-rate margin over `L0` that marks an interval as overflowing.
    pub loss_margin: f64,
    pub n_recover: u32,
    pub min_interval_samples: u64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        BurstConfig {
            m_init: 8192,
            m_min: 2048,
            m_max: 65536,
            step: 2048,
            interval_width: INTERVAL_WIDTH,
            epoch_us: 5 * SECOND,
            loss_margin: 0.1,
            n_recover: 6,
            min_interval_samples: 20,
        }
    }
}

/// Per-interval sent/lost counters for the current epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalLossStats {
    interval_width: u64,
    sent: Vec<u64>,
    lost: Vec<u64>,
    pub epoch_start: Micros,
}

impl IntervalLossStats {
    pub fn new(interval_width: u64, epoch_start: Micros) -> Self {
        assert!(interval_width > 0);
        IntervalLossStats {
            interval_width,
            sent: Vec::new(),
            lost: Vec::new(),
            epoch_start,
        }
    }

    pub fn interval_of(&self, byte_offset: u64) -> usize {
        (byte_offset / self.interval_width) as usize
    }

    pub fn record_packet(&mut self, byte_offset_in_burst: u64, lost: bool) {
        let i = self.interval_of(byte_offset_in_burst);
        if i >= self.sent.len() {
            self.sent.resize(i + 1, 0);
            self.lost.resize(i + 1, 0);
        }
        self.sent[i] += 1;
        if lost {
            self.lost[i] += 1;
        }
    }

    /// `(sent, lost)` of interval `i`.
    pub fn counts(&self, i: usize) -> (u64, u64) {
        (
            self.sent.get(i).copied().unwrap_or(0),
            self.lost.get(i).copied().unwrap_or(0),
        )
    }

    pub fn loss_rate(&self, i: usize) -> Option<f64> {
        let (sent, lost) = self.counts(i);
        (sent > 0).then(|| lost as f64 / sent as f64)
    }

    pub fn intervals(&self) -> usize {
        self.sent.len()
    }

    /// `L0`, the loss rate of interval 0.
    pub fn physical_loss_rate(&self) -> Result<f64, BurstError> {
        self.loss_rate(0).ok_or(BurstError::ColdEpoch)
    }

    /// Loss rate of the current interval for burst cap `m`, pooled from the
    /// deepest interval with samples toward interval 1 until `min_samples`
    /// packets are covered. `None` when no interval above 0 saw traffic.
    pub fn current_loss_rate(&self, m: u64, min_samples: u64) -> Option<f64> {
        let top = self.interval_of(m.saturating_sub(1));
        if top == 0 {
            return self.loss_rate(0);
        }
        let deepest = (1..=top.min(self.intervals().saturating_sub(1)))
            .rev()
            .find(|&i| self.counts(i).0 > 0)?;
        let (mut sent, mut lost) = (0, 0);
        for i in (1..=deepest).rev() {
            let (s, l) = self.counts(i);
            sent += s;
            lost += l;
            if sent >= min_samples {
                break;
            }
        }
        Some(lost as f64 / sent as f64)
    }

    pub fn reset(&mut self, now: Micros) {
        self.sent.clear();
        self.lost.clear();
        self.epoch_start = now;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstLengthState {
    pub m: u64,
    pub m_min: u64,
    pub m_max: u64,
    pub last_update: Micros,
    pub fallback_active: bool,
    /// Consecutive clean epochs spent in fallback.
    pub clean_epochs: u32,
}

impl BurstLengthState {
    pub fn new(cfg: &BurstConfig, now: Micros) -> Self {
        BurstLengthState {
            m: cfg.m_init.clamp(cfg.m_min, cfg.m_max),
            m_min: cfg.m_min,
            m_max: cfg.m_max,
            last_update: now,
            fallback_active: false,
            clean_epochs: 0,
        }
    }
}

/// Burst cap the sender must respect.
pub fn max_burst(state: &BurstLengthState) -> u64 {
    state.m
}

/// One epoch step of the burst cap given `L0` and the current-interval loss.
/// `l_cur == None` means the current interval saw no packets and counts as
/// clean.
pub fn step_m(
    state: &BurstLengthState,
    l0: f64,
    l_cur: Option<f64>,
    now: Micros,
    cfg: &BurstConfig,
) -> BurstLengthState {
    let lossy = l_cur.is_some_and(|l| l > l0 + cfg.loss_margin);
    let mut next = BurstLengthState {
        last_update: now,
        ..*state
    };
    if state.fallback_active {
        if lossy {
            next.clean_epochs = 0;
        } else {
            next.clean_epochs += 1;
            if next.clean_epochs >= cfg.n_recover {
                next.fallback_active = false;
                next.clean_epochs = 0;
            }
        }
        next.m = state.m_min;
        return next;
    }
    if lossy {
        next.m = state.m.saturating_sub(cfg.step).max(state.m_min);
        if next.m == state.m_min {
            next.fallback_active = true;
            next.clean_epochs = 0;
        }
    } else {
        next.m = (state.m + cfg.step).min(state.m_max);
    }
    next
}

/// Epoch update. A no-op until `epoch_us` has passed since the last update;
/// otherwise steps `M`, then clears `stats` for the next epoch.
pub fn update_m(
    state: &BurstLengthState,
    stats: &mut IntervalLossStats,
    now: Micros,
    cfg: &BurstConfig,
) -> BurstLengthState {
    if now.saturating_sub(state.last_update) < cfg.epoch_us {
        return *state;
    }
    let l0 = stats.physical_loss_rate().unwrap_or(0.0);
    let l_cur = stats.current_loss_rate(state.m, cfg.min_interval_samples);
    let next = step_m(state, l0, l_cur, now, cfg);
    stats.reset(now);
    next
}
