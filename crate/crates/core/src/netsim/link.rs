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

//! Bottleneck link: piecewise-constant rate, drop-tail byte buffer, random
//! loss, one-way propagation and additive jitter.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::{serialization_time, Micros, SECOND};

/// Piecewise-constant rate in bits per second. The first breakpoint is always
/// at time 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateSchedule {
    points: Vec<(Micros, u64)>,
}

impl RateSchedule {
    pub fn constant(rate_bps: u64) -> Self {
        RateSchedule {
            points: vec![(0, rate_bps)],
        }
    }

    /// Builds a schedule from `(time, rate)` breakpoints. The first rate also
    /// holds before the first breakpoint. Returns `None` on an empty list,
    /// unsorted times or a zero rate.
    pub fn from_points(mut points: Vec<(Micros, u64)>) -> Option<Self> {
        if points.is_empty() || points.iter().any(|&(_, r)| r == 0) {
            return None;
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return None;
        }
        points[0].0 = 0;
        Some(RateSchedule { points })
    }

    pub fn rate_at(&self, t: Micros) -> u64 {
        let idx = self.points.partition_point(|&(start, _)| start <= t);
        self.points[idx.saturating_sub(1)].1
    }

    pub fn min_rate(&self) -> u64 {
        self.points.iter().map(|&(_, r)| r).min().unwrap_or(0)
    }

    pub fn points(&self) -> &[(Micros, u64)] {
        &self.points
    }

    /// Bits the link can carry during `[from, to)`.
    pub fn capacity_bits(&self, from: Micros, to: Micros) -> f64 {
        let mut bits = 0.0;
        for (i, &(start, rate)) in self.points.iter().enumerate() {
            let end = self.points.get(i + 1).map_or(Micros::MAX, |p| p.0);
            let lo = start.max(from);
            let hi = end.min(to);
            if hi > lo {
                bits += rate as f64 * (hi - lo) as f64 / SECOND as f64;
            }
        }
        bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub sigma_us: f64,
    pub cap_us: Micros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub rate: RateSchedule,
    pub rtprop: Micros,
    pub buffer_bytes: u64,
    pub random_loss: f64,
    pub jitter: Option<JitterModel>,
    pub seed: u64,
}

impl LinkModel {
    pub fn one_way(&self) -> Micros {
        self.rtprop / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DropKind {
    Overflow,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    /// Accepted; when the link was idle, service starts and completes at the
    /// given time.
    Accepted {
        service_done: Option<Micros>,
    },
    Dropped(DropKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Queued<T> {
    item: T,
    size: u64,
    arrival: Micros,
}

/// A packet leaving the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure<T> {
    pub item: T,
    pub size: u64,
    pub arrival: Micros,
    pub departure: Micros,
    /// When the packet reaches the far end.
    pub delivery: Micros,
}

/// Running link state. `queued_bytes` counts the packet in service.
#[derive(Debug)]
pub struct Link<T> {
    model: LinkModel,
    queue: VecDeque<Queued<T>>,
    queued_bytes: u64,
    in_service: bool,
    last_delivery: Micros,
    rng: ChaCha8Rng,
    jitter: Option<(Normal<f64>, Micros)>,
    pub enqueued_bytes: u64,
    pub dropped_bytes: u64,
    pub departed_bytes: u64,
}

impl<T: Copy> Link<T> {
    pub fn new(model: LinkModel) -> Self {
        let jitter = model.jitter.and_then(|j| {
            (j.sigma_us > 0.0).then(|| {
                (
                    Normal::new(0.0, j.sigma_us).expect("finite sigma"),
                    j.cap_us,
                )
            })
        });
        Link {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            queue: VecDeque::new(),
            queued_bytes: 0,
            in_service: false,
            last_delivery: 0,
            jitter,
            enqueued_bytes: 0,
            dropped_bytes: 0,
            departed_bytes: 0,
        }
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    pub fn queued_bytes(&self) -> u64 {
        self.queued_bytes
    }

    pub fn queued_packets(&self) -> usize {
        self.queue.len()
    }

    /// Random loss first, then drop-tail against the byte buffer.
    pub fn enqueue(&mut self, item: T, size: u64, now: Micros) -> EnqueueOutcome {
        self.enqueued_bytes += size;
        if self.model.random_loss > 0.0 && self.rng.gen::<f64>() < self.model.random_loss {
            self.dropped_bytes += size;
            return EnqueueOutcome::Dropped(DropKind::Random);
        }
        if self.queued_bytes + size > self.model.buffer_bytes {
            self.dropped_bytes += size;
            return EnqueueOutcome::Dropped(DropKind::Overflow);
        }
        self.queue.push_back(Queued {
            item,
            size,
            arrival: now,
        });
        self.queued_bytes += size;
        let service_done = (!self.in_service).then(|| {
            self.in_service = true;
            now + serialization_time(size, self.model.rate.rate_at(now))
        });
        EnqueueOutcome::Accepted { service_done }
    }

    /// Finishes serving the head packet. Returns it with its delivery time,
    /// plus the completion time of the next packet if one is waiting.
    pub fn complete_service(&mut self, now: Micros) -> (Departure<T>, Option<Micros>) {
        let head = self
            .queue
            .pop_front()
            .expect("service completion with an empty queue");
        self.queued_bytes -= head.size;
        self.departed_bytes += head.size;
        let delivery = self.delivery_time(now);
        let next = match self.queue.front() {
            Some(q) => Some(now + serialization_time(q.size, self.model.rate.rate_at(now))),
            None => {
                self.in_service = false;
                None
            }
        };
        (
            Departure {
                item: head.item,
                size: head.size,
                arrival: head.arrival,
                departure: now,
                delivery,
            },
            next,
        )
    }

    /// Propagation plus truncated-normal jitter, never overtaking an earlier
    /// packet.
    fn delivery_time(&mut self, departure: Micros) -> Micros {
        let mut t = departure + self.model.one_way();
        if let Some((normal, cap)) = self.jitter {
            let j = normal.sample(&mut self.rng).abs().min(cap as f64);
            t += j.round() as Micros;
        }
        let t = t.max(self.last_delivery);
        self.last_delivery = t;
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MILLISECOND;

    fn model(rate: u64, buffer: u64, loss: f64) -> LinkModel {
        LinkModel {
            rate: RateSchedule::constant(rate),
            rtprop: 25 * MILLISECOND,
            buffer_bytes: buffer,
            random_loss: loss,
            jitter: None,
            seed: 3,
        }
    }

    #[test]
    fn empty_queue_serialization_and_propagation() {
        let mut link = Link::new(model(2_000_000, 100_000, 0.0));
        let out = link.enqueue(1u32, 1200, 0);
        assert_eq!(
            out,
            EnqueueOutcome::Accepted {
                service_done: Some(4_800)
            }
        );
        let (dep, next) = link.complete_service(4_800);
        assert_eq!(dep.delivery, 4_800 + 12_500);
        assert_eq!(next, None);
        assert_eq!(link.queued_bytes(), 0);
    }

    #[test]
    fn overflow_drop() {
        let mut link = Link::new(model(1_000_000, 2_400, 0.0));
        assert!(matches!(
            link.enqueue(1u32, 1200, 0),
            EnqueueOutcome::Accepted { .. }
        ));
        assert!(matches!(
            link.enqueue(2u32, 1200, 0),
            EnqueueOutcome::Accepted { service_done: None }
        ));
        assert_eq!(link.queued_bytes(), 2_400);
        assert_eq!(
            link.enqueue(3u32, 1200, 0),
            EnqueueOutcome::Dropped(DropKind::Overflow)
        );
        assert_eq!(
            link.enqueue(4u32, 1, 0),
            EnqueueOutcome::Dropped(DropKind::Overflow)
        );
    }

    #[test]
    fn random_loss_everything() {
        let mut link = Link::new(model(1_000_000, 100_000, 1.0));
        for i in 0..50u32 {
            assert_eq!(
                link.enqueue(i, 1200, 0),
                EnqueueOutcome::Dropped(DropKind::Random)
            );
        }
        assert_eq!(link.dropped_bytes, link.enqueued_bytes);
    }

    #[test]
    fn back_to_back_departures_are_spaced_by_service_time() {
        let mut link = Link::new(model(1_000_000, 100_000, 0.0));
        let mut done = None;
        for i in 0..4u32 {
            if let EnqueueOutcome::Accepted {
                service_done: Some(t),
            } = link.enqueue(i, 1200, 0)
            {
                done = Some(t);
            }
        }
        let mut deliveries = vec![];
        while let Some(t) = done {
            let (dep, next) = link.complete_service(t);
            deliveries.push(dep.delivery);
            done = next;
        }
        let gaps: Vec<_> = deliveries.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(gaps, vec![9_600; 3]);
    }

    #[test]
    fn jitter_keeps_order_and_cap() {
        let mut m = model(10_000_000, 1_000_000, 0.0);
        m.jitter = Some(JitterModel {
            sigma_us: 5_000.0,
            cap_us: 8_000,
        });
        let mut link = Link::new(m);
        let mut done = None;
        for i in 0..200u32 {
            if let EnqueueOutcome::Accepted {
                service_done: Some(t),
            } = link.enqueue(i, 1200, 0)
            {
                done = Some(t);
            }
        }
        let mut last = 0;
        while let Some(t) = done {
            let (dep, next) = link.complete_service(t);
            assert!(dep.delivery >= last);
            assert!(dep.delivery <= t + 12_500 + 8_000 || dep.delivery == last);
            last = dep.delivery;
            done = next;
        }
    }

    #[test]
    fn schedule_lookup() {
        let s = RateSchedule::from_points(vec![
            (0, 2_000_000),
            (30 * SECOND, 1_000_000),
            (60 * SECOND, 2_000_000),
        ])
        .unwrap();
        assert_eq!(s.rate_at(0), 2_000_000);
        assert_eq!(s.rate_at(30 * SECOND - 1), 2_000_000);
        assert_eq!(s.rate_at(30 * SECOND), 1_000_000);
        assert_eq!(s.rate_at(90 * SECOND), 2_000_000);
        assert_eq!(s.min_rate(), 1_000_000);
        assert_eq!(s.capacity_bits(0, 90 * SECOND), 150e6);
        assert!(RateSchedule::from_points(vec![]).is_none());
        assert!(RateSchedule::from_points(vec![(5, 1), (5, 2)]).is_none());
        assert!(RateSchedule::from_points(vec![(0, 0)]).is_none());
    }
}
