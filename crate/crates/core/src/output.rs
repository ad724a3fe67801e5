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

//! Result files. Everything is rendered in memory first and then written
//! through a temporary file and a rename, so a failed run leaves nothing
//! half-written.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::{SignalReport, SweepRow};
use crate::metrics::{MetricsReport, RunLog};
use crate::types::SECOND;

pub const SCHEMA_LINE: &str = "# schema=1";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>, prec: usize) -> String {
    v.map(|v| format!("{v:.prec$}")).unwrap_or_default()
}

/// Controller snapshots as CSV.
pub fn runlog_csv(log: &RunLog) -> String {
    let mut s = String::new();
    writeln!(s, "{SCHEMA_LINE}").unwrap();
    writeln!(
        s,
        "time_s,flow,mode,cwnd_bytes,inflight_bytes,gamma,max_burst_bytes,est_bandwidth_bps,target_bitrate_bps,min_delay_us,link_rate_bps"
    )
    .unwrap();
    for snap in &log.snapshots {
        writeln!(
            s,
            "{:.3},{},{},{},{},{:.6},{},{},{:.0},{},{}",
            snap.time as f64 / SECOND as f64,
            snap.flow.0,
            snap.mode,
            snap.cwnd,
            snap.inflight,
            snap.gamma,
            snap.max_burst,
            opt_f(snap.est_bandwidth, 0),
            snap.target_bitrate,
            opt(snap.min_delay),
            log.link_rate.rate_at(snap.time),
        )
        .unwrap();
    }
    s
}

pub fn metrics_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn summary_line(report: &MetricsReport) -> String {
    format!(
        "bitrate {:.0} kbps, frame delay p50 {} ms p95 {} ms, stall {:.4}, bw accuracy {}, fairness {}, violations {}",
        report.media_bitrate / 1000.0,
        opt_f(report.frame_delay_p50.map(|d| d as f64 / 1000.0), 1),
        opt_f(report.frame_delay_p95.map(|d| d as f64 / 1000.0), 1),
        report.stalling_ratio,
        opt_f(report.bw_estimation_accuracy, 4),
        opt_f(report.fairness_index, 4),
        report.invariant_violations,
    )
}

pub fn signal_csv(report: &SignalReport) -> String {
    let mut s = String::new();
    writeln!(s, "{SCHEMA_LINE}").unwrap();
    writeln!(s, "signal,threshold,accuracy,degenerate_windows,best").unwrap();
    for r in &report.grid {
        let best = report.best.iter().any(|b| b == r);
        writeln!(
            s,
            "{},{},{:.6},{},{}",
            r.signal, r.threshold, r.accuracy, r.degenerate_windows, best
        )
        .unwrap();
    }
    s
}

pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{SCHEMA_LINE}").unwrap();
    writeln!(
        s,
        "{param},media_bitrate_bps,frame_delay_p50_us,frame_delay_p95_us,stalling_ratio,bw_estimation_accuracy,fairness_index,steady_state_max_burst,fallback_entries,invariant_violations"
    )
    .unwrap();
    for r in rows {
        let m = &r.metrics;
        writeln!(
            s,
            "{},{:.0},{},{},{:.6},{},{},{},{},{}",
            r.value,
            m.media_bitrate,
            opt(m.frame_delay_p50),
            opt(m.frame_delay_p95),
            m.stalling_ratio,
            opt_f(m.bw_estimation_accuracy, 6),
            opt_f(m.fairness_index, 6),
            opt_f(m.steady_state_max_burst, 0),
            m.fallback_entries,
            m.invariant_violations,
        )
        .unwrap();
    }
    s
}

/// Writes `contents` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Writes several files into `dir`, creating it first. All contents must be
/// rendered before the call.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        write_atomic(&dir.join(name), contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::RateSchedule;

    #[test]
    fn csv_has_schema_and_header() {
        let log = RunLog::empty(SECOND, 100_000, RateSchedule::constant(1_000_000));
        let csv = runlog_csv(&log);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SCHEMA_LINE));
        assert!(lines.next().unwrap().starts_with("time_s,flow,mode"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
