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

//! Bandwidth trace files: one `time_seconds rate_kbps` pair per line, held
//! until the next line. Blank lines and `#` comments are ignored.

use std::path::Path;

use thiserror::Error;

use super::link::RateSchedule;
use crate::types::SECOND;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("reading trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace has no samples")]
    Empty,
}

pub fn parse_trace(text: &str) -> Result<RateSchedule, TraceError> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: line_no, msg };
        let mut cols = line.split_whitespace();
        let (Some(t), Some(r), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err("expected two columns: time_seconds rate_kbps".into()));
        };
        let t: f64 = t.parse().map_err(|_| err(format!("bad time {t:?}")))?;
        let r: f64 = r.parse().map_err(|_| err(format!("bad rate {r:?}")))?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(err(format!("time must be non-negative, got {t}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(err(format!("rate must be positive, got {r}")));
        }
        let t_us = (t * SECOND as f64).round() as u64;
        if points.last().is_some_and(|&(prev, _)| prev >= t_us) {
            return Err(err("times must be strictly increasing".into()));
        }
        points.push((t_us, (r * 1000.0).round() as u64));
    }
    RateSchedule::from_points(points).ok_or(TraceError::Empty)
}

pub fn load_trace(path: &Path) -> Result<RateSchedule, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text)
}
