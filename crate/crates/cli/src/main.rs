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

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use camel::experiment::{
    run_signal_experiment, run_sweep, SignalExperimentConfig, SIGNAL_INFLIGHT,
};
use camel::metrics::MetricsReport;
use camel::netsim;
use camel::output::{metrics_json, runlog_csv, signal_csv, summary_line, sweep_csv, write_outputs};
use camel::scenario::{ScenarioConfig, ScenarioError};

const EXIT_USAGE: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "camel",
    version,
    about = "Frame-level congestion control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write runlog.csv and metrics.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score congestion signals on synthetic queuing traces.
    SignalExp {
        #[arg(long)]
        out: PathBuf,
        /// TOML file overriding experiment parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario once per parameter value and print one metrics row each.
    Sweep {
        /// Dotted parameter path, e.g. `link.buffer_bytes`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        scenario: PathBuf,
        /// Also write sweep.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
    Io(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Io(format!("writing outputs: {e}"))
}

fn cmd_run(scenario: PathBuf, out: PathBuf, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(&scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    log::info!("running {}", scenario.display());
    let log = netsim::run(&cfg)?;
    let report = MetricsReport::from_log(&log);
    if log.violation_count > 0 {
        for v in &log.violations {
            eprintln!("invariant: {v}");
        }
        return Err(Failure::Invariant(format!(
            "{} invariant violations",
            log.violation_count
        )));
    }
    write_outputs(
        &out,
        &[
            (cfg.output.runlog.as_str(), runlog_csv(&log)),
            (cfg.output.metrics.as_str(), metrics_json(&report)),
        ],
    )
    .map_err(io_err)?;
    println!("{}", summary_line(&report));
    Ok(())
}

fn cmd_signal_exp(out: PathBuf, config: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => SignalExperimentConfig::load(&p)?,
        None => SignalExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if cfg.traces == 0 || cfg.samples_per_trace == 0 || cfg.bandwidth_bps == 0 || cfg.rtprop_us == 0
    {
        return Err(Failure::Usage(
            "traces, samples_per_trace, bandwidth_bps and rtprop_us must be positive".into(),
        ));
    }
    let report = run_signal_experiment(&cfg);
    write_outputs(&out, &[("signal_accuracy.csv", signal_csv(&report))]).map_err(io_err)?;
    for row in &report.best {
        println!(
            "{:<18} threshold {:>10.3}  accuracy {:.4}",
            row.signal, row.threshold, row.accuracy
        );
    }
    let top = report
        .best
        .iter()
        .map(|r| r.accuracy)
        .fold(f64::MIN, f64::max);
    if report.accuracy_of(SIGNAL_INFLIGHT) != Some(top) {
        log::warn!("inflight gradient is not the most accurate signal on this configuration");
    }
    Ok(())
}

fn cmd_sweep(
    param: String,
    values: String,
    scenario: PathBuf,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let values: Vec<String> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        return Err(Failure::Usage("--values is empty".into()));
    }
    let rows = run_sweep(&scenario, &param, &values)?;
    let csv = sweep_csv(&param, &rows);
    let breaches: u64 = rows.iter().map(|r| r.metrics.invariant_violations).sum();
    if breaches > 0 {
        return Err(Failure::Invariant(format!(
            "{breaches} invariant violations across the sweep"
        )));
    }
    if let Some(dir) = out {
        write_outputs(&dir, &[("sweep.csv", csv.clone())]).map_err(io_err)?;
    }
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAMEL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
        } => cmd_run(scenario, out, seed),
        Command::SignalExp { out, config, seed } => cmd_signal_exp(out, config, seed),
        Command::Sweep {
            param,
            values,
            scenario,
            out,
        } => cmd_sweep(param, values, scenario, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
