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

//! Event loop: encoders feed controllers, controllers feed the bottleneck,
//! the receiver reports each frame once all its packets are resolved.

use std::collections::BTreeMap;

use crate::controller::{Controller, SendDecision, SendMode};
use crate::encoder::Encoder;
use crate::metrics::{FeedbackRecord, FlowInfo, FrameRecord, PacketRecord, RunLog};
use crate::scenario::{ScenarioConfig, ScenarioError, SimSpec};
use crate::types::{
    serialization_time, FeedbackEntry, FeedbackReport, FlowId, Frame, FrameKind, Micros, SimClock,
};

use super::event::EventQueue;
use super::link::{Departure, EnqueueOutcome, Link};

/// Only the first few violation messages are kept; all are counted.
const MAX_VIOLATION_MESSAGES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Carried {
    Media(usize),
    Cross(usize),
}

#[derive(Debug)]
enum Event {
    Frame(usize),
    Timer(usize),
    LinkDone,
    Deliver(Departure<Carried>),
    Feedback(usize, FeedbackReport),
    Cross(usize),
    Snapshot,
}

struct RxFrame {
    entries: Vec<Option<Option<Micros>>>,
    resolved: usize,
    last_resolution: Micros,
}

struct FlowRt {
    controller: Controller,
    encoder: Encoder,
    script: Option<Vec<(Micros, u64)>>,
    script_pos: usize,
    etr_schedule: Vec<(Micros, f64)>,
    start: Micros,
    timer_at: Option<Micros>,
    rx: BTreeMap<u64, RxFrame>,
    frame_index: BTreeMap<u64, usize>,
    /// Bytes sent per unreported frame, with the count of later reports seen.
    sent_unreported: BTreeMap<u64, (u64, u32)>,
    tracked_inflight: u64,
    last_emit: Option<Micros>,
    last_m: u64,
    last_m_change: Micros,
    bytes_sent: u64,
    bytes_delivered: u64,
    bytes_dropped: u64,
}

struct Sim<'a> {
    spec: &'a SimSpec,
    clock: SimClock,
    events: EventQueue<Event>,
    link: Link<Carried>,
    flows: Vec<FlowRt>,
    log: RunLog,
    delivered_total: u64,
}

/// Runs a scenario file's simulation. Zero duration yields an empty log.
pub fn run(scenario: &ScenarioConfig) -> Result<RunLog, ScenarioError> {
    Ok(simulate(&scenario.to_spec()?))
}

pub fn simulate(spec: &SimSpec) -> RunLog {
    let mut log = RunLog::empty(
        spec.duration,
        spec.snapshot_interval,
        spec.link.rate.clone(),
    );
    if spec.duration == 0 {
        return log;
    }
    let flows = spec
        .flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let id = FlowId(i as u32);
            log.flows.push(FlowInfo {
                id,
                kind: f.kind,
                start: f.start,
            });
            let controller = Controller::new(f.controller.clone(), f.kind, id, f.start);
            FlowRt {
                last_m: controller.burst_state().m,
                last_m_change: f.start,
                controller,
                encoder: Encoder::new(f.encoder.clone()).expect("validated encoder config"),
                script: f.script.clone(),
                script_pos: 0,
                etr_schedule: f.etr_schedule.clone(),
                start: f.start,
                timer_at: None,
                rx: BTreeMap::new(),
                frame_index: BTreeMap::new(),
                sent_unreported: BTreeMap::new(),
                tracked_inflight: 0,
                last_emit: None,
                bytes_sent: 0,
                bytes_delivered: 0,
                bytes_dropped: 0,
            }
        })
        .collect();
    let mut sim = Sim {
        spec,
        clock: SimClock::default(),
        events: EventQueue::default(),
        link: Link::new(spec.link.clone()),
        flows,
        log,
        delivered_total: 0,
    };
    sim.run();
    sim.finish()
}

impl Sim<'_> {
    fn run(&mut self) {
        for (i, f) in self.spec.flows.iter().enumerate() {
            let first = match &f.script {
                Some(s) => s.first().map(|&(off, _)| f.start + off),
                None => Some(f.start),
            };
            if let Some(t) = first.filter(|&t| t < self.spec.duration) {
                self.events.push(t, Event::Frame(i));
            }
        }
        for (i, c) in self.spec.cross.iter().enumerate() {
            if c.start < c.end.min(self.spec.duration) {
                self.events.push(c.start, Event::Cross(i));
            }
        }
        self.events.push(0, Event::Snapshot);

        while let Some((t, ev)) = self.events.pop() {
            if t >= self.spec.duration {
                break;
            }
            self.clock.advance_to(t);
            self.handle(ev);
            self.check_link();
        }
    }

    fn handle(&mut self, ev: Event) {
        let now = self.clock.now();
        match ev {
            Event::Frame(i) => self.on_frame_due(i, now),
            Event::Timer(i) => {
                if self.flows[i].timer_at == Some(now) {
                    self.flows[i].timer_at = None;
                    let d = self.flows[i].controller.on_timer(now);
                    self.apply_decision(i, d, now);
                }
            }
            Event::LinkDone => {
                let (dep, next) = self.link.complete_service(now);
                self.check_queue_delay(&dep);
                if let Some(t) = next {
                    self.events.push(t, Event::LinkDone);
                }
                self.events.push(dep.delivery, Event::Deliver(dep));
            }
            Event::Deliver(dep) => self.on_deliver(dep, now),
            Event::Feedback(i, report) => self.on_feedback(i, report, now),
            Event::Cross(c) => {
                let spec = self.spec.cross[c];
                match self.link.enqueue(Carried::Cross(c), spec.packet_bytes, now) {
                    EnqueueOutcome::Accepted {
                        service_done: Some(t),
                    } => self.events.push(t, Event::LinkDone),
                    EnqueueOutcome::Accepted { service_done: None }
                    | EnqueueOutcome::Dropped(_) => {}
                }
                let next = now + serialization_time(spec.packet_bytes, spec.rate_bps).max(1);
                if next < spec.end {
                    self.events.push(next, Event::Cross(c));
                }
            }
            Event::Snapshot => {
                for f in &self.flows {
                    if now >= f.start {
                        self.log.snapshots.push(f.controller.snapshot(now));
                    }
                }
                self.events
                    .push(now + self.spec.snapshot_interval, Event::Snapshot);
            }
        }
    }

    fn on_frame_due(&mut self, i: usize, now: Micros) {
        let flow = &mut self.flows[i];
        if let Some(&(_, etr)) = flow.etr_schedule.iter().rev().find(|&&(t, _)| t <= now) {
            if etr != flow.encoder.etr() {
                flow.encoder.set_etr(etr);
            }
        }
        let (frame, next) = match &flow.script {
            Some(script) => {
                let k = flow.script_pos;
                flow.script_pos += 1;
                let frame = Frame::new(
                    k as u64,
                    FrameKind::P,
                    script[k].1,
                    flow.encoder.config().mtu,
                    now,
                )
                .expect("scripted frame size and mtu are positive");
                (frame, script.get(k + 1).map(|&(off, _)| flow.start + off))
            }
            None => {
                let target = flow.controller.app_target_bitrate();
                let frame = flow.encoder.next_frame(target, now);
                let next = flow.start
                    + flow
                        .encoder
                        .config()
                        .frame_offset(flow.encoder.frames_emitted());
                (frame, Some(next))
            }
        };
        flow.frame_index
            .insert(frame.frame_id, self.log.frames.len());
        self.log.frames.push(FrameRecord {
            flow: FlowId(i as u32),
            frame_id: frame.frame_id,
            kind: frame.kind,
            size: frame.size,
            encode_time: now,
            delivered: None,
        });
        if let Some(next) = next.filter(|&t| t < self.spec.duration) {
            self.events.push(next, Event::Frame(i));
        }
        let d = flow.controller.on_frame(frame, now);
        self.apply_decision(i, d, now);
    }

    fn apply_decision(&mut self, i: usize, d: SendDecision, now: Micros) {
        self.check_burst_shape(i, &d, now);
        let one_way = self.spec.link.one_way();
        for p in &d.packets {
            let idx = self.log.packets.len();
            self.log.packets.push(PacketRecord {
                flow: FlowId(i as u32),
                frame_id: p.frame_id,
                seq_in_frame: p.seq_in_frame,
                size: p.size,
                send_time: now,
                burst_offset: p.burst_offset,
                recv_time: None,
                drop: None,
            });
            let flow = &mut self.flows[i];
            flow.bytes_sent += p.size;
            flow.tracked_inflight += p.size;
            flow.sent_unreported.entry(p.frame_id).or_default().0 += p.size;
            flow.rx.entry(p.frame_id).or_insert_with(|| RxFrame {
                entries: vec![None; p.packets_in_frame as usize],
                resolved: 0,
                last_resolution: 0,
            });
            match self.link.enqueue(Carried::Media(idx), p.size, now) {
                EnqueueOutcome::Accepted { service_done } => {
                    if let Some(t) = service_done {
                        self.events.push(t, Event::LinkDone);
                    }
                }
                EnqueueOutcome::Dropped(kind) => {
                    self.log.packets[idx].drop = Some(kind);
                    self.flows[i].bytes_dropped += p.size;
                    self.resolve(i, p.frame_id, p.seq_in_frame, None, now + one_way);
                }
            }
        }
        if !d.packets.is_empty() {
            self.flows[i].last_emit = Some(now);
        }
        if let Some(w) = d.next_wakeup {
            let flow = &mut self.flows[i];
            if flow.timer_at.is_none_or(|t| w < t) {
                flow.timer_at = Some(w);
                self.events.push(w, Event::Timer(i));
            }
        }
        self.check_flow(i, now);
    }

    fn on_deliver(&mut self, dep: Departure<Carried>, now: Micros) {
        self.delivered_total += dep.size;
        let Carried::Media(idx) = dep.item else {
            self.log.cross_traffic_bytes += dep.size;
            return;
        };
        let rec = &mut self.log.packets[idx];
        rec.recv_time = Some(now);
        let (flow, frame_id, seq) = (rec.flow.0 as usize, rec.frame_id, rec.seq_in_frame);
        self.flows[flow].bytes_delivered += dep.size;
        self.resolve(flow, frame_id, seq, Some(now), now);
    }

    /// Marks one packet as received or lost at the receiver; emits the frame
    /// report once every packet is resolved.
    fn resolve(&mut self, i: usize, frame_id: u64, seq: u32, recv: Option<Micros>, at: Micros) {
        let flow = &mut self.flows[i];
        let rx = flow
            .rx
            .get_mut(&frame_id)
            .expect("frame registered at send");
        debug_assert!(rx.entries[seq as usize].is_none());
        rx.entries[seq as usize] = Some(recv);
        rx.resolved += 1;
        rx.last_resolution = rx.last_resolution.max(at);
        if rx.resolved < rx.entries.len() {
            return;
        }
        let rx = flow.rx.remove(&frame_id).expect("present");
        let entries: Vec<FeedbackEntry> = rx
            .entries
            .iter()
            .enumerate()
            .map(|(s, e)| FeedbackEntry {
                seq_in_frame: s as u32,
                recv_time: e.expect("resolved"),
            })
            .collect();
        if entries.iter().all(|e| !e.lost()) {
            let last = entries.iter().filter_map(|e| e.recv_time).max();
            if let Some(&fi) = flow.frame_index.get(&frame_id) {
                self.log.frames[fi].delivered = last;
            }
        }
        let send = rx.last_resolution;
        let arrival = send + self.spec.link.one_way();
        let report = FeedbackReport {
            flow_id: FlowId(i as u32),
            frame_id,
            entries,
            report_send_time: send,
            report_arrival_time: arrival,
        };
        self.events.push(arrival, Event::Feedback(i, report));
    }

    fn on_feedback(&mut self, i: usize, report: FeedbackReport, now: Micros) {
        let received = report.received_count() as u32;
        self.log.feedback.push(FeedbackRecord {
            flow: FlowId(i as u32),
            frame_id: report.frame_id,
            report_send_time: report.report_send_time,
            arrival_time: now,
            received,
            lost: report.entries.len() as u32 - received,
        });
        let flow = &mut self.flows[i];
        if let Some((bytes, _)) = flow.sent_unreported.remove(&report.frame_id) {
            flow.tracked_inflight -= bytes;
            // Earlier frames outrun by enough later reports count as lost.
            let guard = flow.controller.config().reorder_guard_frames;
            let mut expired = vec![];
            for (&id, (_, later)) in flow.sent_unreported.range_mut(..report.frame_id) {
                *later += 1;
                if *later >= guard {
                    expired.push(id);
                }
            }
            for id in expired {
                let (bytes, _) = flow.sent_unreported.remove(&id).expect("present");
                flow.tracked_inflight -= bytes;
            }
        }
        let d = flow.controller.on_feedback(&report, now);
        if let Some(sample) = flow.controller.take_sample() {
            self.log.samples.push((FlowId(i as u32), sample));
        }
        self.check_step_discipline(i, now);
        self.apply_decision(i, d, now);
    }

    fn violation(&mut self, msg: String) {
        self.log.violation_count += 1;
        if self.log.violations.len() < MAX_VIOLATION_MESSAGES {
            log::warn!("invariant violated: {msg}");
            self.log.violations.push(msg);
        }
    }

    fn check_flow(&mut self, i: usize, now: Micros) {
        let flow = &self.flows[i];
        let c = &flow.controller;
        let mut errs = vec![];
        if c.inflight() != flow.tracked_inflight {
            errs.push(format!(
                "t={now} flow {i}: window conservation, controller inflight {} vs unreported {}",
                c.inflight(),
                flow.tracked_inflight
            ));
        }
        let floor = c.config().detector.gamma_floor;
        if !(floor..=1.0).contains(&c.gamma()) {
            errs.push(format!(
                "t={now} flow {i}: gamma {} outside [{floor}, 1]",
                c.gamma()
            ));
        }
        if let Some(bound) = c.window_bound() {
            if c.inflight() > bound {
                errs.push(format!(
                    "t={now} flow {i}: inflight {} above window bound {bound}",
                    c.inflight()
                ));
            }
        }
        for e in errs {
            self.violation(e);
        }
    }

    fn check_burst_shape(&mut self, i: usize, d: &SendDecision, now: Micros) {
        if d.packets.is_empty() {
            return;
        }
        let c = &self.flows[i].controller;
        let cap = c.burst_state().m;
        let mut errs = vec![];
        let mut bursts = vec![];
        for p in &d.packets {
            if p.burst_offset == 0 {
                bursts.push(0u64);
            }
            match bursts.last_mut() {
                Some(b) => *b += p.size,
                None => errs.push(format!(
                    "t={now} flow {i}: burst does not start at offset 0"
                )),
            }
        }
        if c.mode() == SendMode::Burst {
            if let Some(&b) = bursts.iter().find(|&&b| b > cap && b > c.config().mtu) {
                errs.push(format!("t={now} flow {i}: burst of {b} B above cap {cap}"));
            }
        }
        if bursts.len() > 1 || self.flows[i].last_emit == Some(now) {
            errs.push(format!(
                "t={now} flow {i}: two bursts emitted at the same instant"
            ));
        }
        for e in errs {
            self.violation(e);
        }
    }

    fn check_step_discipline(&mut self, i: usize, now: Micros) {
        let flow = &mut self.flows[i];
        let cfg = flow.controller.config().burst;
        let m = flow.controller.burst_state().m;
        if m == flow.last_m {
            return;
        }
        let (prev, since) = (flow.last_m, now - flow.last_m_change);
        flow.last_m = m;
        flow.last_m_change = now;
        if m.abs_diff(prev) != cfg.step {
            self.violation(format!("t={now} flow {i}: M moved {prev} -> {m}"));
        }
        if since < cfg.epoch_us {
            self.violation(format!(
                "t={now} flow {i}: M changed {since} µs after the previous change"
            ));
        }
    }

    fn check_link(&mut self) {
        let l = &self.link;
        let (enq, dropped, departed, queued) = (
            l.enqueued_bytes,
            l.dropped_bytes,
            l.departed_bytes,
            l.queued_bytes(),
        );
        let now = self.clock.now();
        if enq != dropped + departed + queued {
            self.violation(format!(
                "t={now} link conservation: enqueued {enq} dropped {dropped} departed {departed} queued {queued}"
            ));
        }
        if self.delivered_total > departed {
            self.violation(format!("t={now} delivered more than departed"));
        }
    }

    fn check_queue_delay(&mut self, dep: &Departure<Carried>) {
        let m = self.link.model();
        // One µs of rounding per queued packet on top of draining a full buffer.
        let bound = serialization_time(m.buffer_bytes, m.rate.min_rate()) + m.buffer_bytes;
        let delay = dep.departure - dep.arrival;
        if delay > bound {
            self.violation(format!(
                "t={} queue delay {delay} above bound {bound}",
                dep.departure
            ));
        }
    }

    fn finish(mut self) -> RunLog {
        for i in 0..self.flows.len() {
            let f = &self.flows[i];
            let in_transit: u64 = self
                .log
                .packets
                .iter()
                .filter(|p| p.flow.0 as usize == i && p.recv_time.is_none() && p.drop.is_none())
                .map(|p| p.size)
                .sum();
            if f.bytes_sent != f.bytes_delivered + f.bytes_dropped + in_transit {
                let msg = format!(
                    "flow {i}: sent {} != delivered {} + dropped {} + in transit {in_transit}",
                    f.bytes_sent, f.bytes_delivered, f.bytes_dropped
                );
                self.violation(msg);
            }
        }
        self.log.counters = self.flows.iter().map(|f| f.controller.counters()).collect();
        self.log
    }
}
