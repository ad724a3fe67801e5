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

//! Congestion detection from the inflight-ordered delay gradient.
//!
//! Frame delays are regressed against the bytes that were in flight when each
//! frame left. Below the BDP the delay does not depend on inflight; above it
//! every extra byte waits in the bottleneck queue for `8 / bandwidth` seconds.
//! A slope above `k_thresh` times that fully-queued slope is read as
//! congestion, which decays the window scale `gamma`.
//!
//! The MinRTT queuing signal and the time-ordered gradient are also provided;
//! they only serve as comparison baselines.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::types::{Micros, SECOND};

pub const DEFAULT_SIGNAL_WINDOW: Micros = 5 * SECOND;
pub const GAMMA_DECAY: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Threshold as a fraction of the fully-congested slope `8 / avg(B)`.
    pub k_thresh: f64,
    pub gamma_floor: f64,
    /// Observation window in microseconds.
    pub window_us: Micros,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            k_thresh: 0.5,
            gamma_floor: 0.25,
            window_us: DEFAULT_SIGNAL_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalSample {
    pub inflight: u64,
    pub delay: Micros,
    pub time: Micros,
}

/// Time-bounded window of `(inflight, delay, time)` samples.
#[derive(Debug, Clone)]
pub struct SignalWindow {
    horizon: Micros,
    samples: VecDeque<SignalSample>,
}

impl SignalWindow {
    pub fn new(horizon: Micros) -> Self {
        SignalWindow {
            horizon,
            samples: VecDeque::new(),
        }
    }

    pub fn from_samples(horizon: Micros, samples: impl IntoIterator<Item = SignalSample>) -> Self {
        let mut w = SignalWindow::new(horizon);
        for s in samples {
            w.push(s);
        }
        w
    }

    /// Appends a sample and drops everything older than the horizon relative
    /// to it. Samples must arrive in time order.
    pub fn push(&mut self, sample: SignalSample) {
        debug_assert!(self.samples.back().is_none_or(|b| b.time <= sample.time));
        self.samples.push_back(sample);
        while let Some(front) = self.samples.front() {
            if sample.time - front.time <= self.horizon {
                break;
            }
            self.samples.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &SignalSample> {
        self.samples.iter()
    }

    pub fn newest(&self) -> Option<&SignalSample> {
        self.samples.back()
    }

    pub fn horizon(&self) -> Micros {
        self.horizon
    }
}

/// Least-squares slope. `degenerate` is set, and the slope forced to zero,
/// when there are fewer than two points or the regressor has no spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub slope: f64,
    pub degenerate: bool,
}

impl Gradient {
    const DEGENERATE: Gradient = Gradient {
        slope: 0.0,
        degenerate: true,
    };
}

fn ols_slope(points: &[(f64, f64)]) -> Gradient {
    if points.len() < 2 {
        return Gradient::DEGENERATE;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Gradient::DEGENERATE;
    }
    Gradient {
        slope: sxy / sxx,
        degenerate: false,
    }
}

/// Slope of delay against inflight, in microseconds per byte.
pub fn inflight_gradient(window: &SignalWindow) -> Gradient {
    let pts: Vec<_> = window
        .samples()
        .map(|s| (s.inflight as f64, s.delay as f64))
        .collect();
    ols_slope(&pts)
}

/// `D - min(D)` over the window, in microseconds.
pub fn minrtt_signal(window: &SignalWindow) -> Micros {
    let Some(newest) = window.newest() else {
        return 0;
    };
    let min = window
        .samples()
        .map(|s| s.delay)
        .min()
        .unwrap_or(newest.delay);
    newest.delay - min
}

/// Slope of delay against time, in microseconds per second.
pub fn time_gradient(window: &SignalWindow) -> Gradient {
    let Some(first) = window.samples().next() else {
        return Gradient::DEGENERATE;
    };
    let t0 = first.time;
    let pts: Vec<_> = window
        .samples()
        .map(|s| ((s.time - t0) as f64 / SECOND as f64, s.delay as f64))
        .collect();
    ols_slope(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionVerdict {
    pub congested: bool,
    /// Microseconds per byte.
    pub gradient: f64,
    /// Microseconds per byte.
    pub threshold: f64,
    /// Fewer than two samples in the window.
    pub cold: bool,
    /// All inflight values in the window were equal.
    pub degenerate: bool,
}

/// Threshold slope for `avg_bandwidth`: `k_thresh * 8 / avg(B)`, in
/// microseconds per byte.
pub fn threshold_slope(avg_bandwidth: f64, k_thresh: f64) -> f64 {
    k_thresh * 8.0 * SECOND as f64 / avg_bandwidth
}

pub fn detect(window: &SignalWindow, avg_bandwidth: f64, k_thresh: f64) -> CongestionVerdict {
    debug_assert!(avg_bandwidth > 0.0);
    let threshold = threshold_slope(avg_bandwidth, k_thresh);
    if window.len() < 2 {
        return CongestionVerdict {
            congested: false,
            gradient: 0.0,
            threshold,
            cold: true,
            degenerate: true,
        };
    }
    let g = inflight_gradient(window);
    CongestionVerdict {
        congested: g.slope > threshold,
        gradient: g.slope,
        threshold,
        cold: false,
        degenerate: g.degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaState {
    pub gamma: f64,
    pub last_update_time: Micros,
}

impl Default for GammaState {
    fn default() -> Self {
        GammaState {
            gamma: 1.0,
            last_update_time: 0,
        }
    }
}

/// Decays gamma by 0.95 (not below `floor`) on congestion, resets it to 1
/// otherwise.
pub fn update_gamma(
    state: GammaState,
    verdict: &CongestionVerdict,
    floor: f64,
    now: Micros,
) -> GammaState {
    let gamma = if verdict.congested {
        // x * 95 / 100 rounds to the decimal values 0.95, 0.9025, 0.857375
        // where x * 0.95 drifts by an ulp.
        (state.gamma * 95.0 / 100.0).max(floor)
    } else {
        1.0
    };
    GammaState {
        gamma,
        last_update_time: now,
    }
}

/// Congestion-adjusted bitrate handed to the encoder.
pub fn target_bitrate(gamma: f64, avg_bandwidth: f64) -> f64 {
    gamma * avg_bandwidth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::analytic_rtt;
    use crate::types::MILLISECOND;
    use proptest::prelude::*;

    const BW: u64 = 2_000_000;
    const RTPROP: Micros = 25 * MILLISECOND;
    const BDP: u64 = 6_250;

    fn window_of(points: &[(u64, Micros)]) -> SignalWindow {
        SignalWindow::from_samples(
            DEFAULT_SIGNAL_WINDOW,
            points
                .iter()
                .enumerate()
                .map(|(i, &(inflight, delay))| SignalSample {
                    inflight,
                    delay,
                    time: i as Micros * 100 * MILLISECOND,
                }),
        )
    }

    fn verdict(congested: bool) -> CongestionVerdict {
        CongestionVerdict {
            congested,
            gradient: 0.0,
            threshold: 0.0,
            cold: false,
            degenerate: false,
        }
    }

    #[test]
    fn inflight_gradient_on_queueing_branch() {
        let pts: Vec<_> = [7_000u64, 9_000, 12_000, 15_000, 20_000]
            .iter()
            .map(|&i| (i, analytic_rtt(i, BW, RTPROP, BDP)))
            .collect();
        let g = inflight_gradient(&window_of(&pts));
        assert!(!g.degenerate);
        assert!((g.slope - 4.0).abs() < 1e-9, "{}", g.slope);
    }

    #[test]
    fn inflight_gradient_flat_branch() {
        let pts: Vec<_> = [1_000u64, 3_000, 5_000, 6_250]
            .iter()
            .map(|&i| (i, analytic_rtt(i, BW, RTPROP, BDP)))
            .collect();
        assert_eq!(inflight_gradient(&window_of(&pts)).slope, 0.0);
    }

    #[test]
    fn inflight_gradient_two_points() {
        let g = inflight_gradient(&window_of(&[(6_250, 25_000), (12_500, 50_000)]));
        assert!((g.slope - 4.0).abs() < 1e-12);
    }

    #[test]
    fn inflight_gradient_degenerate() {
        let g = inflight_gradient(&window_of(&[(5_000, 25_000), (5_000, 40_000)]));
        assert_eq!(g, Gradient::DEGENERATE);
        assert_eq!(
            inflight_gradient(&window_of(&[(5_000, 25_000)])),
            Gradient::DEGENERATE
        );
    }

    #[test]
    fn minrtt_examples() {
        assert_eq!(
            minrtt_signal(&window_of(&[(0, 25_000), (0, 37_500)])),
            12_500
        );
        assert_eq!(
            minrtt_signal(&window_of(&[(0, 30_000), (0, 30_000), (0, 30_000)])),
            0
        );
        assert_eq!(minrtt_signal(&window_of(&[(0, 30_000)])), 0);
        assert_eq!(minrtt_signal(&SignalWindow::new(SECOND)), 0);
    }

    fn timed(points: &[(Micros, Micros)]) -> SignalWindow {
        SignalWindow::from_samples(
            DEFAULT_SIGNAL_WINDOW,
            points.iter().map(|&(time, delay)| SignalSample {
                inflight: 0,
                delay,
                time,
            }),
        )
    }

    #[test]
    fn time_gradient_examples() {
        let g = time_gradient(&timed(&[
            (0, 25_000),
            (SECOND, 30_000),
            (2 * SECOND, 35_000),
        ]));
        assert!((g.slope - 5_000.0).abs() < 1e-9);
        let g = time_gradient(&timed(&[
            (0, 25_000),
            (SECOND, 25_000),
            (2 * SECOND, 25_000),
        ]));
        assert_eq!(g.slope, 0.0);
        assert!(!g.degenerate);
        let g = time_gradient(&timed(&[
            (0, 25_000),
            (SECOND, 25_000),
            (2 * SECOND, 40_000),
        ]));
        assert!((g.slope - 7_500.0).abs() < 1e-9);
        assert!(time_gradient(&timed(&[(SECOND, 1), (SECOND, 5)])).degenerate);
    }

    #[test]
    fn detect_examples() {
        let w = window_of(&[(6_250, 25_000), (12_500, 50_000)]);
        let v = detect(&w, 2e6, 0.5);
        assert!(v.congested);
        assert_eq!(v.threshold, 2.0);

        let w = window_of(&[(1_000, 25_000), (5_000, 25_000)]);
        assert!(!detect(&w, 2e6, 0.5).congested);

        // slope exactly 2 us/byte equals the threshold: not congested
        let w = window_of(&[(10_000, 25_000), (15_000, 35_000)]);
        let v = detect(&w, 2e6, 0.5);
        assert_eq!(v.gradient, 2.0);
        assert!(!v.congested);
    }

    #[test]
    fn detect_cold_window() {
        let v = detect(&window_of(&[(10_000, 40_000)]), 2e6, 0.5);
        assert!(v.cold && !v.congested);
    }

    #[test]
    fn gamma_three_decays_then_reset() {
        let mut s = GammaState::default();
        for _ in 0..3 {
            s = update_gamma(s, &verdict(true), 0.25, 0);
        }
        assert_eq!(s.gamma, 0.857375);
        let s = update_gamma(
            GammaState {
                gamma: 0.7,
                last_update_time: 0,
            },
            &verdict(false),
            0.25,
            1,
        );
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.last_update_time, 1);
    }

    #[test]
    fn gamma_floor_holds() {
        let s = GammaState {
            gamma: 0.25,
            last_update_time: 0,
        };
        assert_eq!(update_gamma(s, &verdict(true), 0.25, 0).gamma, 0.25);
    }

    #[test]
    fn target_bitrate_examples() {
        assert_eq!(target_bitrate(1.0, 1e6), 1e6);
        assert_eq!(target_bitrate(0.95, 2e6), 1.9e6);
        assert_eq!(target_bitrate(0.857375, 1e6), 857_375.0);
    }

    #[test]
    fn window_horizon() {
        let mut w = SignalWindow::new(5 * SECOND);
        for t in 0..=10 {
            w.push(SignalSample {
                inflight: t,
                delay: 1,
                time: t * SECOND,
            });
        }
        assert_eq!(w.len(), 6);
        assert_eq!(w.samples().next().unwrap().time, 5 * SECOND);
    }

    proptest! {
        #[test]
        fn gamma_stays_in_range(events in prop::collection::vec(any::<bool>(), 0..400), floor in 0.05f64..1.0) {
            let mut s = GammaState::default();
            for c in events {
                s = update_gamma(s, &verdict(c), floor, 0);
                prop_assert!(s.gamma >= floor && s.gamma <= 1.0);
            }
        }

        #[test]
        fn clean_update_is_idempotent(gamma in 0.25f64..=1.0) {
            let s = GammaState { gamma, last_update_time: 0 };
            let once = update_gamma(s, &verdict(false), 0.25, 0);
            let twice = update_gamma(once, &verdict(false), 0.25, 0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn detect_is_scale_consistent(
            inflights in prop::collection::vec(1_000u64..40_000, 2..40),
            bw_kbps in 500u64..5_000,
        ) {
            let bw = bw_kbps * 1000;
            let bdp = bdp_bytes(bw, RTPROP);
            let make = |scale: u64| {
                let pts: Vec<_> = inflights
                    .iter()
                    .map(|&i| (i * scale, analytic_rtt(i * scale, bw * scale, RTPROP, bdp * scale)))
                    .collect();
                window_of(&pts)
            };
            let a = detect(&make(1), bw as f64, 0.5);
            let b = detect(&make(2), 2.0 * bw as f64, 0.5);
            prop_assert_eq!(a.congested, b.congested);
            prop_assert!((a.threshold - 2.0 * b.threshold).abs() < 1e-9);
            // microsecond rounding of the synthesized delays leaves a small residue
            prop_assert!((a.gradient - 2.0 * b.gradient).abs() <= 1e-3 * a.gradient.abs().max(1.0));
        }
    }

    fn bdp_bytes(bw: u64, rtprop: Micros) -> u64 {
        bw * rtprop / SECOND / 8
    }
}
