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

//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints exactly one PASS/FAIL line, then exits nonzero if any failed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use camel::controller::{ControllerConfig, ControllerKind};
use camel::detector::{update_gamma, CongestionVerdict, GammaState};
use camel::encoder::EncoderConfig;
use camel::experiment::{
    run_signal_experiment, run_sweep, SignalExperimentConfig, SIGNAL_INFLIGHT, SIGNAL_MINRTT,
    SIGNAL_TIME,
};
use camel::metrics::{bw_estimation_accuracy, fairness_index, media_bitrate, percentile, RunLog};
use camel::netsim::{self, LinkModel, RateSchedule};
use camel::output::{metrics_json, runlog_csv};
use camel::scenario::{FlowSpec, SimSpec};
use camel::{FlowId, MetricsReport, Micros, ScenarioConfig, SECOND};

type Outcome = Result<String, String>;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(name: &str) -> RunLog {
    netsim::run(&load(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Collects every log produced so the invariant criterion can inspect them.
#[derive(Default)]
struct Runs {
    logs: Vec<(String, u64)>,
}

impl Runs {
    fn record(&mut self, name: &str, log: &RunLog) {
        self.logs.push((name.to_string(), log.violation_count));
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn signal_ordering() -> Outcome {
    let cfg = SignalExperimentConfig::default();
    let started = Instant::now();
    let report = run_signal_experiment(&cfg);
    let elapsed = started.elapsed();
    let acc = |s| report.accuracy_of(s).expect("signal evaluated");
    let (ours, minrtt, time) = (acc(SIGNAL_INFLIGHT), acc(SIGNAL_MINRTT), acc(SIGNAL_TIME));
    check(
        cfg.traces >= 20
            && ours >= minrtt + 0.05
            && ours >= time + 0.05
            && elapsed < Duration::from_secs(10),
        format!(
            "{} traces: inflight {ours:.4}, minrtt {minrtt:.4}, time {time:.4}, {:.2} s",
            cfg.traces,
            elapsed.as_secs_f64()
        ),
    )
}

fn undershoot(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let log = run("undershoot_60.toml");
    let elapsed = started.elapsed();
    runs.record("undershoot_60", &log);
    let acc = bw_estimation_accuracy(
        log.flow_snapshots(FlowId(0)),
        &log.link_rate,
        30 * SECOND,
        60 * SECOND,
    )
    .unwrap_or(0.0);
    check(
        acc >= 0.95 && elapsed < Duration::from_secs(5),
        format!(
            "accuracy over [30, 60) s {acc:.4}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Time after `step` from which the estimate stays within 10% of the rate
/// until `end`, or `None` if it never settles.
fn settle_time(log: &RunLog, step: Micros, end: Micros) -> Option<Micros> {
    let snaps: Vec<_> = log
        .flow_snapshots(FlowId(0))
        .filter(|s| s.time >= step && s.time < end)
        .collect();
    let within = |s: &&camel::Snapshot| {
        let truth = log.link_rate.rate_at(s.time) as f64;
        s.est_bandwidth
            .is_some_and(|e| (e - truth).abs() <= 0.1 * truth)
    };
    let last_bad = snaps.iter().rposition(|s| !within(s));
    let first_good = match last_bad {
        None => 0,
        Some(i) => i + 1,
    };
    snaps.get(first_good).map(|s| s.time - step)
}

fn responsiveness(runs: &mut Runs) -> Outcome {
    let log = run("step_down_up.toml");
    runs.record("step_down_up", &log);
    let steps = [(30 * SECOND, 60 * SECOND), (60 * SECOND, log.duration)];
    let settled: Vec<Option<Micros>> = steps
        .iter()
        .map(|&(s, e)| settle_time(&log, s, e))
        .collect();
    let ok = settled.iter().all(|t| t.is_some_and(|t| t <= 5 * SECOND));
    let shown: Vec<String> = settled
        .iter()
        .map(|t| {
            t.map_or("never".into(), |t| {
                format!("{:.1} s", t as f64 / SECOND as f64)
            })
        })
        .collect();
    check(
        ok,
        format!("settled after down step {}, up step {}", shown[0], shown[1]),
    )
}

fn idle_spec(script: Vec<(Micros, u64)>) -> SimSpec {
    let end = script.last().map_or(0, |&(t, _)| t);
    SimSpec {
        duration: end + 5 * SECOND,
        seed: 1,
        snapshot_interval: SECOND,
        link: LinkModel {
            // 1 byte per microsecond keeps serialization times exact.
            rate: RateSchedule::constant(8_000_000),
            rtprop: 40_000,
            buffer_bytes: 1_000_000,
            random_loss: 0.0,
            jitter: None,
            seed: 1,
        },
        flows: vec![FlowSpec {
            kind: ControllerKind::Camel,
            start: 0,
            encoder: EncoderConfig::default(),
            etr_schedule: vec![],
            controller: ControllerConfig::default(),
            script: Some(script),
        }],
        cross: vec![],
    }
}

fn samples_by_frame(log: &RunLog) -> BTreeMap<u64, (Option<f64>, Micros)> {
    log.samples
        .iter()
        .map(|(_, s)| (s.frame_id, (s.bandwidth, s.delay)))
        .collect()
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-3 * a.abs().max(b.abs())
}

fn idle_gaps() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 48,
        failure_persistence: None,
        ..Config::default()
    });
    let sizes: Vec<u64> = (0..40).map(|k| 1_500 + (k * 2_311) % 9_000).collect();
    let base: Vec<(Micros, u64)> = sizes
        .iter()
        .enumerate()
        .map(|(k, &s)| (k as Micros * 40_000, s))
        .collect();
    let reference = samples_by_frame(&netsim::simulate(&idle_spec(base.clone())));
    if reference.len() != sizes.len() {
        return Err(format!(
            "reference run produced {} samples",
            reference.len()
        ));
    }
    let result = runner.run(&vec(0u64..3_000_000, sizes.len()), |gaps| {
        let mut shift = 0;
        let gapped: Vec<(Micros, u64)> = base
            .iter()
            .zip(&gaps)
            .map(|(&(t, s), &g)| {
                shift += g;
                (t + shift, s)
            })
            .collect();
        let log = netsim::simulate(&idle_spec(gapped));
        prop_assert_eq!(log.violation_count, 0);
        let got = samples_by_frame(&log);
        prop_assert_eq!(got.len(), reference.len());
        for (id, &(bw, delay)) in &reference {
            let &(gbw, gdelay) = got
                .get(id)
                .ok_or_else(|| TestCaseError::fail(format!("frame {id} missing")))?;
            match (bw, gbw) {
                (Some(a), Some(b)) => {
                    prop_assert!(rel_close(a, b), "frame {} bandwidth {} vs {}", id, a, b)
                }
                (None, None) => {}
                _ => {
                    return Err(TestCaseError::fail(format!(
                        "frame {id} bandwidth {bw:?} vs {gbw:?}"
                    )))
                }
            }
            prop_assert!(
                rel_close(delay as f64, gdelay as f64),
                "frame {} delay {} vs {}",
                id,
                delay,
                gdelay
            );
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok(format!("48 gap patterns, {} frames each", sizes.len())),
        Err(e) => Err(e.to_string()),
    }
}

fn burst_sweep() -> Outcome {
    let values: Vec<String> = ["2000", "4000", "6000", "8000", "10000"]
        .map(String::from)
        .to_vec();
    let rows = run_sweep(
        &scenario_dir().join("burst_buffer.toml"),
        "link.buffer_bytes",
        &values,
    )
    .map_err(|e| e.to_string())?;
    let m: Vec<f64> = rows
        .iter()
        .map(|r| r.metrics.steady_state_max_burst.unwrap_or(0.0))
        .collect();
    let monotone = m.windows(2).all(|w| w[1] >= w[0]);
    let fell_back = rows[0].metrics.fallback_entries > 0;
    let deep = m[4] >= 8_192.0;
    let clean = rows.iter().all(|r| r.metrics.invariant_violations == 0);
    check(
        monotone && fell_back && deep && clean,
        format!("steady M {m:.0?}, fallback at 2 KB {fell_back}"),
    )
}

fn physical_loss(runs: &mut Runs) -> Outcome {
    let cfg = load("random_loss.toml");
    let log = netsim::run(&cfg).map_err(|e| e.to_string())?;
    runs.record("random_loss", &log);
    let peak = log.snapshots.iter().map(|s| s.max_burst).max().unwrap_or(0);
    let fallback = log.fallback_seen(FlowId(0)) || log.counters[0].fallback_entries > 0;
    check(
        cfg.link.loss == 0.05
            && cfg.link.buffer_bytes == 64_000
            && log.duration >= 200 * SECOND
            && peak == cfg.controller.burst.m_max
            && !fallback,
        format!(
            "peak M {peak} of {}, fallback {fallback}",
            cfg.controller.burst.m_max
        ),
    )
}

fn gamma_dynamics() -> Outcome {
    let verdict = |congested| CongestionVerdict {
        congested,
        gradient: 0.0,
        threshold: 0.0,
        cold: false,
        degenerate: false,
    };
    let mut g = GammaState::default();
    for t in 0..3 {
        g = update_gamma(g, &verdict(true), 0.25, t);
    }
    let after_three = g.gamma;
    g = update_gamma(g, &verdict(false), 0.25, 3);
    check(
        after_three == 0.857375 && g.gamma == 1.0,
        format!("three congested {after_three}, then clean {}", g.gamma),
    )
}

fn flow_p95(log: &RunLog, flow: FlowId) -> Micros {
    percentile(&log.frame_delays(Some(flow)), 0.95).unwrap_or(Micros::MAX)
}

fn fairness(runs: &mut Runs) -> Outcome {
    let shared = run("fairness_3flows.toml");
    let single = run("single_flow.toml");
    runs.record("fairness_3flows", &shared);
    runs.record("single_flow", &single);
    let from = shared.duration - 20 * SECOND;
    let shares: Vec<f64> = shared
        .flows
        .iter()
        .map(|f| media_bitrate(&shared, Some(f.id), from, shared.duration))
        .collect();
    let jain = fairness_index(&shares).unwrap_or(0.0);
    let baseline = flow_p95(&single, FlowId(0));
    let p95: Vec<Micros> = shared
        .flows
        .iter()
        .map(|f| flow_p95(&shared, f.id))
        .collect();
    let ok = shared.flows.len() == 3 && jain >= 0.9 && p95.iter().all(|&d| d <= 2 * baseline);
    check(
        ok,
        format!(
            "Jain {jain:.4}, p95 {:?} ms vs single-flow {} ms",
            p95.iter().map(|d| d / 1000).collect::<Vec<_>>(),
            baseline / 1000
        ),
    )
}

fn bundled_scenarios() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

fn render(path: &Path) -> (String, String, u64) {
    let cfg = ScenarioConfig::load(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let log = netsim::run(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    (
        runlog_csv(&log),
        metrics_json(&MetricsReport::from_log(&log)),
        log.violation_count,
    )
}

fn determinism(runs: &mut Runs) -> Outcome {
    let paths = bundled_scenarios();
    let mut differing = vec![];
    for p in &paths {
        let (a_csv, a_json, violations) = render(p);
        let (b_csv, b_json, _) = render(p);
        let name = p.file_stem().unwrap().to_string_lossy().into_owned();
        runs.logs.push((name.clone(), violations));
        if a_csv != b_csv || a_json != b_json {
            differing.push(name);
        }
    }
    check(
        !paths.is_empty() && differing.is_empty(),
        format!("{} scenarios, differing {differing:?}", paths.len()),
    )
}

fn invariants(runs: &Runs) -> Outcome {
    let bad: Vec<_> = runs.logs.iter().filter(|(_, v)| *v > 0).collect();
    check(
        bad.is_empty() && !runs.logs.is_empty(),
        format!("{} runs checked, violating {bad:?}", runs.logs.len()),
    )
}

fn main() {
    let mut runs = Runs::default();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 signal accuracy ordering", signal_ordering()),
        ("2 undershooting estimation accuracy", undershoot(&mut runs)),
        ("3 responsiveness to rate steps", responsiveness(&mut runs)),
        ("4 idle-gap immunity", idle_gaps()),
        ("5 burst length adaptation", burst_sweep()),
        ("6 physical loss discrimination", physical_loss(&mut runs)),
        ("7 gamma dynamics", gamma_dynamics()),
        ("8 inter-flow fairness", fairness(&mut runs)),
        ("9 determinism", determinism(&mut runs)),
    ];
    let last = invariants(&runs);
    let mut failed = 0;
    for (name, outcome) in results
        .iter()
        .chain(std::iter::once(&("10 invariant suite", last)))
    {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
