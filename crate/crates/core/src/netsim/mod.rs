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

//! Deterministic discrete-event network simulator.

mod analytic;
mod event;
mod link;
mod sim;
mod trace;

pub use analytic::{analytic_rtt, synth_trace, LinkParams, TracePoint};
pub use event::EventQueue;
pub use link::{Departure, DropKind, EnqueueOutcome, JitterModel, Link, LinkModel, RateSchedule};
pub use sim::{run, simulate};
pub use trace::{load_trace, parse_trace, TraceError};
