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

//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! duration_s = 90
//! seed = 7
//!
//! [link]
//! rate_kbps = 1000          # or `schedule = [[0, 2000], [30, 1000]]`
//! rtprop_ms = 40            #    or `trace_file = "trace.txt"`
//! buffer_bytes = 100000
//!
//! [[flows]]
//! controller = "camel"      # or "fallback-only"
//! start_s = 0
//! etr_schedule = [[30, 0.6], [60, 1.0]]
//! [flows.encoder]
//! fps = 30
//! ```
//!
//! Optional `[controller]` (with nested `detector`, `burst` and `fallback`
//! tables) overrides controller defaults for every flow.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerConfig, ControllerKind};
use crate::encoder::EncoderConfig;
use crate::netsim::{load_trace, JitterModel, LinkModel, RateSchedule, TraceError};
use crate::types::{Micros, MILLISECOND, SECOND};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub rate_kbps: Option<f64>,
    /// `[time_s, rate_kbps]` breakpoints.
    pub schedule: Option<Vec<(f64, f64)>>,
    pub trace_file: Option<PathBuf>,
    pub rtprop_ms: f64,
    pub buffer_bytes: u64,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub jitter_sigma_ms: f64,
    #[serde(default)]
    pub jitter_cap_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub fps: f64,
    pub gop_length: u32,
    pub i_to_p_ratio: f64,
    pub etr: f64,
    pub size_jitter_cv: f64,
    /// Derived from the scenario seed when absent.
    pub seed: Option<u64>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderConfig::default();
        EncoderSection {
            fps: d.fps,
            gop_length: d.gop_length,
            i_to_p_ratio: d.i_to_p_ratio,
            etr: d.etr,
            size_jitter_cv: d.size_jitter_cv,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub encoder: EncoderSection,
    /// `[time_s, etr]` changes applied from the given absolute time.
    #[serde(default)]
    pub etr_schedule: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossTrafficSection {
    pub rate_kbps: f64,
    #[serde(default)]
    pub start_s: f64,
    pub end_s: Option<f64>,
    #[serde(default = "default_cross_packet")]
    pub packet_bytes: u64,
}

fn default_cross_packet() -> u64 {
    1200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub runlog: String,
    pub metrics: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            runlog: "runlog.csv".into(),
            metrics: "metrics.json".into(),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_snapshot_ms() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_snapshot_ms")]
    pub snapshot_interval_ms: f64,
    pub link: LinkSection,
    pub flows: Vec<FlowSection>,
    #[serde(default)]
    pub cross_traffic: Vec<CrossTrafficSection>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory trace paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Resolved flow description consumed by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub kind: ControllerKind,
    pub start: Micros,
    pub encoder: EncoderConfig,
    pub etr_schedule: Vec<(Micros, f64)>,
    pub controller: ControllerConfig,
    /// Replaces the encoder with fixed `(offset from start, size)` frames.
    pub script: Option<Vec<(Micros, u64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSpec {
    pub rate_bps: u64,
    pub start: Micros,
    pub end: Micros,
    pub packet_bytes: u64,
}

/// Fully resolved, validated simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub duration: Micros,
    pub seed: u64,
    pub snapshot_interval: Micros,
    pub link: LinkModel,
    pub flows: Vec<FlowSpec>,
    pub cross: Vec<CrossSpec>,
}

fn secs(s: f64) -> Micros {
    (s * SECOND as f64).round() as Micros
}

fn millis(ms: f64) -> Micros {
    (ms * MILLISECOND as f64).round() as Micros
}

fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be a non-negative number, got {v}"),
        ))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Parses `text` after setting each dotted `path` to `value`.
    pub fn parse_with_overrides(
        text: &str,
        overrides: &[(&str, &str)],
    ) -> Result<Self, ScenarioError> {
        let mut root: toml::Table =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for (path, value) in overrides {
            set_path(&mut root, path, parse_scalar(value))?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::load_with_overrides(path, &[])
    }

    pub fn load_with_overrides(
        path: &Path,
        overrides: &[(&str, &str)],
    ) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse_with_overrides(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("duration_s", self.duration_s)?;
        self.validate_allow_empty()
    }

    /// All checks except `duration_s > 0`.
    pub fn validate_allow_empty(&self) -> Result<(), ScenarioError> {
        non_negative("duration_s", self.duration_s)?;
        positive("snapshot_interval_ms", self.snapshot_interval_ms)?;
        if self.flows.is_empty() {
            return Err(invalid("flows", "at least one flow is required"));
        }
        let l = &self.link;
        let sources = [
            l.rate_kbps.is_some(),
            l.schedule.is_some(),
            l.trace_file.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(invalid(
                "link",
                "exactly one of rate_kbps, schedule, trace_file is required",
            ));
        }
        if let Some(r) = l.rate_kbps {
            positive("link.rate_kbps", r)?;
        }
        if let Some(s) = &l.schedule {
            if s.is_empty() {
                return Err(invalid("link.schedule", "needs at least one breakpoint"));
            }
            for (i, &(t, r)) in s.iter().enumerate() {
                non_negative(&format!("link.schedule[{i}].time"), t)?;
                positive(&format!("link.schedule[{i}].rate"), r)?;
            }
            if s.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(invalid(
                    "link.schedule",
                    "times must be strictly increasing",
                ));
            }
        }
        if let Some(p) = &l.trace_file {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(invalid(
                    "link.trace_file",
                    format!("{} does not exist", full.display()),
                ));
            }
        }
        positive("link.rtprop_ms", l.rtprop_ms)?;
        let mtu = self.controller.mtu;
        if l.buffer_bytes < mtu {
            return Err(invalid(
                "link.buffer_bytes",
                format!(
                    "must hold at least one MTU ({mtu} B), got {}",
                    l.buffer_bytes
                ),
            ));
        }
        if !(0.0..=1.0).contains(&l.loss) {
            return Err(invalid(
                "link.loss",
                format!("must lie in [0, 1], got {}", l.loss),
            ));
        }
        non_negative("link.jitter_sigma_ms", l.jitter_sigma_ms)?;
        non_negative("link.jitter_cap_ms", l.jitter_cap_ms)?;

        for (i, f) in self.flows.iter().enumerate() {
            non_negative(&format!("flows[{i}].start_s"), f.start_s)?;
            self.encoder_config(i)
                .validate()
                .map_err(|e| invalid(format!("flows[{i}].encoder"), e.to_string()))?;
            for (j, &(t, etr)) in f.etr_schedule.iter().enumerate() {
                non_negative(&format!("flows[{i}].etr_schedule[{j}].time"), t)?;
                if !(etr > 0.0 && etr <= 1.0) {
                    return Err(invalid(
                        format!("flows[{i}].etr_schedule[{j}].etr"),
                        format!("must lie in (0, 1], got {etr}"),
                    ));
                }
            }
        }
        for (i, c) in self.cross_traffic.iter().enumerate() {
            positive(&format!("cross_traffic[{i}].rate_kbps"), c.rate_kbps)?;
            non_negative(&format!("cross_traffic[{i}].start_s"), c.start_s)?;
            if c.packet_bytes == 0 || c.packet_bytes > mtu {
                return Err(invalid(
                    format!("cross_traffic[{i}].packet_bytes"),
                    format!("must lie in [1, {mtu}]"),
                ));
            }
        }
        let c = &self.controller;
        if c.mtu == 0 {
            return Err(invalid("controller.mtu", "must be positive"));
        }
        positive("controller.initial_bitrate_bps", c.initial_bitrate_bps)?;
        if c.cwnd_min() > c.cwnd_max_bytes {
            return Err(invalid(
                "controller.cwnd_max_bytes",
                "below cwnd_min_packets * mtu",
            ));
        }
        let d = &c.detector;
        if !(d.gamma_floor > 0.0 && d.gamma_floor <= 1.0) {
            return Err(invalid(
                "controller.detector.gamma_floor",
                "must lie in (0, 1]",
            ));
        }
        positive("controller.detector.k_thresh", d.k_thresh)?;
        let b = &c.burst;
        if b.step == 0 || b.interval_width == 0 || b.epoch_us == 0 {
            return Err(invalid(
                "controller.burst",
                "step, interval_width and epoch_us must be positive",
            ));
        }
        if !(b.m_min <= b.m_init && b.m_init <= b.m_max && b.m_min > 0) {
            return Err(invalid(
                "controller.burst",
                "need 0 < m_min <= m_init <= m_max",
            ));
        }
        positive("controller.fallback.rate_min_bps", c.fallback.rate_min_bps)?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn rate_schedule(&self) -> Result<RateSchedule, ScenarioError> {
        let l = &self.link;
        if let Some(r) = l.rate_kbps {
            return Ok(RateSchedule::constant((r * 1000.0).round() as u64));
        }
        if let Some(s) = &l.schedule {
            let points = s
                .iter()
                .map(|&(t, r)| (secs(t), (r * 1000.0).round() as u64))
                .collect();
            return RateSchedule::from_points(points)
                .ok_or_else(|| invalid("link.schedule", "invalid breakpoints"));
        }
        match &l.trace_file {
            Some(p) => Ok(load_trace(&self.resolve(p))?),
            None => Err(invalid("link", "no rate given")),
        }
    }

    pub fn encoder_config(&self, flow: usize) -> EncoderConfig {
        let e = &self.flows[flow].encoder;
        EncoderConfig {
            fps: e.fps,
            gop_length: e.gop_length,
            i_to_p_ratio: e.i_to_p_ratio,
            etr: e.etr,
            size_jitter_cv: e.size_jitter_cv,
            seed: e.seed.unwrap_or_else(|| {
                self.seed ^ (flow as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            }),
            mtu: self.controller.mtu,
        }
    }

    pub fn to_spec(&self) -> Result<SimSpec, ScenarioError> {
        self.validate_allow_empty()?;
        let l = &self.link;
        let jitter = (l.jitter_sigma_ms > 0.0).then(|| JitterModel {
            sigma_us: l.jitter_sigma_ms * MILLISECOND as f64,
            cap_us: millis(l.jitter_cap_ms),
        });
        let link = LinkModel {
            rate: self.rate_schedule()?,
            rtprop: millis(l.rtprop_ms),
            buffer_bytes: l.buffer_bytes,
            random_loss: l.loss,
            jitter,
            seed: self
                .seed
                .wrapping_mul(0xD1B5_4A32_D192_ED03)
                .wrapping_add(1),
        };
        let duration = secs(self.duration_s);
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowSpec {
                kind: f.controller,
                start: secs(f.start_s),
                encoder: self.encoder_config(i),
                etr_schedule: f.etr_schedule.iter().map(|&(t, e)| (secs(t), e)).collect(),
                controller: self.controller.clone(),
                script: None,
            })
            .collect();
        let cross = self
            .cross_traffic
            .iter()
            .map(|c| CrossSpec {
                rate_bps: (c.rate_kbps * 1000.0).round() as u64,
                start: secs(c.start_s),
                end: c.end_s.map_or(duration, secs),
                packet_bytes: c.packet_bytes,
            })
            .collect();
        Ok(SimSpec {
            duration,
            seed: self.seed,
            snapshot_interval: millis(self.snapshot_interval_ms).max(1),
            link,
            flows,
            cross,
        })
    }
}

/// Integer, float, boolean, else string.
pub fn parse_scalar(s: &str) -> toml::Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = s.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(s.to_string())
}

/// Sets a dotted path such as `link.buffer_bytes` or `flows.0.encoder.etr`.
/// Missing tables are created; array elements must exist.
pub fn set_path(
    root: &mut toml::Table,
    path: &str,
    value: toml::Value,
) -> Result<(), ScenarioError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(path, "empty path segment"));
    }
    let Some((first, rest)) = parts.split_first() else {
        return Err(invalid(path, "empty path"));
    };
    if rest.is_empty() {
        root.insert(first.to_string(), value);
        return Ok(());
    }
    let mut cur: &mut toml::Value = root
        .entry(first.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for (i, seg) in rest.iter().enumerate() {
        let is_last = i + 1 == rest.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if is_last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| invalid(path, format!("`{seg}` is not an array index")))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    invalid(path, format!("index {idx} out of range (len {len})"))
                })?;
                if is_last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(invalid(
                    path,
                    format!("`{seg}` is not inside a table or array"),
                ))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
duration_s = 10
seed = 3

[link]
rate_kbps = 1000
rtprop_ms = 40
buffer_bytes = 60000

[[flows]]
[flows.encoder]
fps = 30
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ScenarioConfig::parse(BASIC).unwrap();
        cfg.validate().unwrap();
        let spec = cfg.to_spec().unwrap();
        assert_eq!(spec.duration, 10 * SECOND);
        assert_eq!(spec.link.rtprop, 40_000);
        assert_eq!(spec.link.rate.rate_at(0), 1_000_000);
        assert_eq!(spec.flows.len(), 1);
        assert_eq!(spec.flows[0].kind, ControllerKind::Camel);
        assert_eq!(spec.snapshot_interval, 100_000);
    }

    #[test]
    fn unknown_field_is_parse_error() {
        let text = BASIC.replace("seed = 3", "seed = 3\nbogus = 1");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn zero_duration_rejected_by_validate() {
        let text = BASIC.replace("duration_s = 10", "duration_s = 0");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("duration_s"), "{err}");
        assert!(cfg.to_spec().is_ok());
    }

    #[test]
    fn small_buffer_names_field() {
        let text = BASIC.replace("buffer_bytes = 60000", "buffer_bytes = 100");
        let err = ScenarioConfig::parse(&text)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("link.buffer_bytes"), "{err}");
    }

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::parse_with_overrides(
            BASIC,
            &[
                ("link.buffer_bytes", "2048"),
                ("flows.0.encoder.etr", "0.4"),
                ("controller.burst.m_init", "4096"),
                ("seed", "9"),
            ],
        )
        .unwrap();
        assert_eq!(cfg.link.buffer_bytes, 2048);
        assert_eq!(cfg.flows[0].encoder.etr, 0.4);
        assert_eq!(cfg.controller.burst.m_init, 4096);
        assert_eq!(cfg.seed, 9);
        assert!(ScenarioConfig::parse_with_overrides(BASIC, &[("flows.3.start_s", "1")]).is_err());
        assert!(ScenarioConfig::parse_with_overrides(BASIC, &[("link.nope", "1")]).is_err());
    }

    #[test]
    fn schedule_link() {
        let text = BASIC.replace(
            "rate_kbps = 1000",
            "schedule = [[0, 2000], [30, 1000], [60, 2000]]",
        );
        let spec = ScenarioConfig::parse(&text).unwrap().to_spec().unwrap();
        assert_eq!(spec.link.rate.rate_at(45 * SECOND), 1_000_000);
        let both = BASIC.replace("rate_kbps = 1000", "rate_kbps = 1000\nschedule = [[0, 5]]");
        assert!(ScenarioConfig::parse(&both).unwrap().validate().is_err());
    }
}
