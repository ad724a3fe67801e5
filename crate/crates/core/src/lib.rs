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

//! Frame-level congestion control for real-time video, with a deterministic
//! network simulator to exercise it.
//!
//! The sender estimates bandwidth from the packet trains of its own frames,
//! detects congestion from the slope of frame delay against inflight bytes,
//! and caps burst length from per-offset loss statistics.

pub mod burst;
pub mod controller;
pub mod detector;
pub mod encoder;
pub mod estimator;
pub mod experiment;
pub mod metrics;
pub mod netsim;
pub mod output;
pub mod scenario;
pub mod types;

pub use controller::{
    Controller, ControllerConfig, ControllerKind, SendDecision, SendMode, Snapshot,
};
pub use metrics::{MetricsReport, RunLog};
pub use scenario::{ScenarioConfig, ScenarioError};
pub use types::{
    FeedbackEntry, FeedbackReport, FlowId, Frame, FrameKind, Micros, MILLISECOND, SECOND,
};
