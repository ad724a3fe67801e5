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

//! Synthetic real-time encoder.
//!
//! Frames are produced at exactly `k / fps`. The mean frame size follows the
//! target bitrate scaled by the encoded-to-target ratio (ETR); the first frame
//! of every GOP is an I-frame `i_to_p_ratio` times larger than the P-frames,
//! with the P-frames shrunk so the GOP mean is unchanged. Sizes then get
//! mean-one lognormal jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Frame, FrameKind, Micros, DEFAULT_MTU, SECOND};

/// Frames never shrink below this payload.
pub const MIN_FRAME_BYTES: u64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderConfigError {
    #[error("fps must be positive, got {0}")]
    Fps(f64),
    #[error("gop_length must be at least 1")]
    Gop,
    #[error("i_to_p_ratio must be at least 1, got {0}")]
    Ratio(f64),
    #[error("etr must lie in (0, 1], got {0}")]
    Etr(f64),
    #[error("size_jitter_cv must be non-negative, got {0}")]
    Jitter(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub fps: f64,
    pub gop_length: u32,
    pub i_to_p_ratio: f64,
    pub etr: f64,
    pub size_jitter_cv: f64,
    pub seed: u64,
    pub mtu: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            fps: 30.0,
            gop_length: 60,
            i_to_p_ratio: 4.0,
            etr: 1.0,
            size_jitter_cv: 0.1,
            seed: 1,
            mtu: DEFAULT_MTU,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderConfigError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(EncoderConfigError::Fps(self.fps));
        }
        if self.gop_length == 0 {
            return Err(EncoderConfigError::Gop);
        }
        if self.i_to_p_ratio.is_nan() || self.i_to_p_ratio < 1.0 {
            return Err(EncoderConfigError::Ratio(self.i_to_p_ratio));
        }
        if !(self.etr > 0.0 && self.etr <= 1.0) {
            return Err(EncoderConfigError::Etr(self.etr));
        }
        if self.size_jitter_cv.is_nan() || self.size_jitter_cv < 0.0 {
            return Err(EncoderConfigError::Jitter(self.size_jitter_cv));
        }
        Ok(())
    }

    /// Emission time of frame `k` relative to the stream start.
    pub fn frame_offset(&self, k: u64) -> Micros {
        (k as f64 * SECOND as f64 / self.fps).round() as Micros
    }

    /// Size multipliers for I- and P-frames that keep the GOP mean at 1.
    pub fn gop_weights(&self) -> (f64, f64) {
        let g = self.gop_length as f64;
        let p = g / (self.i_to_p_ratio + g - 1.0);
        (self.i_to_p_ratio * p, p)
    }
}

/// Running encoder: frame counter and jitter RNG.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    frame_counter: u64,
    rng: ChaCha8Rng,
    jitter: Option<LogNormal<f64>>,
    target_bitrate: f64,
    etr: f64,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self, EncoderConfigError> {
        config.validate()?;
        let cv = config.size_jitter_cv;
        let jitter = (cv > 0.0).then(|| {
            let sigma2 = (1.0 + cv * cv).ln();
            LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("finite lognormal parameters")
        });
        Ok(Encoder {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            etr: config.etr,
            config,
            frame_counter: 0,
            jitter,
            target_bitrate: 0.0,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frame_counter
    }

    pub fn target_bitrate(&self) -> f64 {
        self.target_bitrate
    }

    /// Overrides the ETR from the next frame on.
    pub fn set_etr(&mut self, etr: f64) {
        assert!(etr > 0.0 && etr <= 1.0, "etr out of range: {etr}");
        self.etr = etr;
    }

    pub fn etr(&self) -> f64 {
        self.etr
    }

    /// Mean frame size for `target_bitrate` at the current ETR.
    pub fn mean_frame_bytes(&self, target_bitrate: f64) -> f64 {
        self.etr * target_bitrate / (8.0 * self.config.fps)
    }

    /// Produces the next frame. `now` becomes its encode time.
    pub fn next_frame(&mut self, target_bitrate: f64, now: Micros) -> Frame {
        assert!(target_bitrate > 0.0, "target bitrate must be positive");
        self.target_bitrate = target_bitrate;
        let k = self.frame_counter;
        self.frame_counter += 1;
        let (i_w, p_w) = self.config.gop_weights();
        let kind = if k.is_multiple_of(self.config.gop_length as u64) {
            FrameKind::I
        } else {
            FrameKind::P
        };
        let weight = match kind {
            FrameKind::I => i_w,
            FrameKind::P => p_w,
        };
        let noise = self.jitter.map_or(1.0, |d| d.sample(&mut self.rng));
        let size = (self.mean_frame_bytes(target_bitrate) * weight * noise).round() as u64;
        let size = size.max(MIN_FRAME_BYTES);
        Frame::new(k, kind, size, self.config.mtu, now).expect("non-empty frame and mtu")
    }
}

/// Average bitrate of `frames` over a window of `window` microseconds.
pub fn long_run_bitrate<'a>(frames: impl IntoIterator<Item = &'a Frame>, window: Micros) -> f64 {
    if window == 0 {
        return 0.0;
    }
    let bytes: u64 = frames.into_iter().map(|f| f.size).sum();
    bytes as f64 * 8.0 * SECOND as f64 / window as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(etr: f64) -> EncoderConfig {
        EncoderConfig {
            fps: 25.0,
            gop_length: 25,
            i_to_p_ratio: 1.0,
            etr,
            size_jitter_cv: 0.0,
            seed: 7,
            mtu: 1200,
        }
    }

    #[test]
    fn uniform_frames() {
        let mut e = Encoder::new(flat(1.0)).unwrap();
        for k in 0..50 {
            let f = e.next_frame(1e6, k * 40_000);
            assert_eq!(f.size, 5_000);
            assert_eq!(f.packets, vec![1200, 1200, 1200, 1200, 200]);
        }
    }

    #[test]
    fn undershoot_sixty_percent() {
        let mut e = Encoder::new(flat(0.6)).unwrap();
        assert_eq!(e.next_frame(1e6, 0).size, 3_000);
        let mut e = Encoder::new(flat(1.0)).unwrap();
        e.set_etr(0.6);
        assert_eq!(e.next_frame(1e6, 0).size, 3_000);
    }

    #[test]
    fn gop_split() {
        let cfg = EncoderConfig {
            i_to_p_ratio: 10.0,
            ..flat(1.0)
        };
        let mut e = Encoder::new(cfg).unwrap();
        let frames: Vec<_> = (0..25).map(|k| e.next_frame(1e6, k * 40_000)).collect();
        assert_eq!(frames[0].kind, FrameKind::I);
        assert_eq!(frames[0].size, 36_765);
        assert!(frames[1..]
            .iter()
            .all(|f| f.kind == FrameKind::P && f.size == 3_676));
    }

    #[test]
    fn frame_size_floor() {
        let mut e = Encoder::new(flat(1.0)).unwrap();
        assert_eq!(e.next_frame(1_000.0, 0).size, MIN_FRAME_BYTES);
    }

    #[test]
    fn frame_times_are_exact() {
        let cfg = EncoderConfig {
            fps: 30.0,
            ..flat(1.0)
        };
        assert_eq!(cfg.frame_offset(0), 0);
        assert_eq!(cfg.frame_offset(3), 100_000);
        assert_eq!(cfg.frame_offset(30), SECOND);
    }

    #[test]
    fn long_run_bitrate_examples() {
        let frames: Vec<_> = (0..25)
            .map(|k| Frame::new(k, FrameKind::P, 5_000, 1200, 0).unwrap())
            .collect();
        assert_eq!(long_run_bitrate(&frames, SECOND), 1e6);
        assert_eq!(long_run_bitrate(&[], SECOND), 0.0);
    }

    #[test]
    fn etr_run_matches_expectation() {
        let cfg = EncoderConfig {
            fps: 30.0,
            gop_length: 30,
            i_to_p_ratio: 5.0,
            etr: 0.6,
            size_jitter_cv: 0.3,
            seed: 11,
            mtu: 1200,
        };
        let mut e = Encoder::new(cfg.clone()).unwrap();
        let frames: Vec<_> = (0..1800)
            .map(|k| e.next_frame(1e6, cfg.frame_offset(k)))
            .collect();
        let r = long_run_bitrate(&frames, 60 * SECOND);
        assert!((r / 0.6e6 - 1.0).abs() < 0.03, "{r}");
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(flat(0.0).validate(), Err(EncoderConfigError::Etr(0.0)));
        assert_eq!(flat(1.5).validate(), Err(EncoderConfigError::Etr(1.5)));
        let cfg = EncoderConfig {
            gop_length: 0,
            ..flat(1.0)
        };
        assert_eq!(cfg.validate(), Err(EncoderConfigError::Gop));
        let cfg = EncoderConfig {
            fps: 0.0,
            ..flat(1.0)
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn long_run_converges_to_etr(
            seed in any::<u64>(),
            etr in 0.2f64..=1.0,
            cv in 0.0f64..0.3,
            ratio in 1.0f64..5.0,
        ) {
            let cfg = EncoderConfig {
                fps: 30.0,
                gop_length: 30,
                i_to_p_ratio: ratio,
                etr,
                size_jitter_cv: cv,
                seed,
                mtu: 1200,
            };
            let mut e = Encoder::new(cfg.clone()).unwrap();
            let frames: Vec<_> = (0..1800).map(|k| e.next_frame(1.5e6, cfg.frame_offset(k))).collect();
            let ratio = long_run_bitrate(&frames, 60 * SECOND) / 1.5e6;
            prop_assert!((ratio / etr - 1.0).abs() < 0.03, "ratio {} etr {}", ratio, etr);
        }

        #[test]
        fn deterministic_under_seed(seed in any::<u64>(), targets in prop::collection::vec(2e5f64..3e6, 1..60)) {
            let cfg = EncoderConfig { seed, size_jitter_cv: 0.4, ..EncoderConfig::default() };
            let run = || {
                let mut e = Encoder::new(cfg.clone()).unwrap();
                targets.iter().enumerate().map(|(k, &t)| e.next_frame(t, k as u64)).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
