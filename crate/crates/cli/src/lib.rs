//! `harmrej` command-line front end.

pub mod plot;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use harmrej_core::scenario::{load_scenario, Scenario, ScenarioError, BUNDLED};
use harmrej_core::sim::{self, RunOutcome, SimError, Summary, TraceLog};

use plot::{line_chart, Series};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const OUT_DIR_ENV: &str = "HARMREJ_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "harmrej", version, about = "Harmonic disturbance rejection with finite-time frequency estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file or bundled scenario and write trace, summary and plots.
    Run {
        scenario: String,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one scenario per parameter value and collect the summaries.
    Sweep {
        scenario: String,
        /// One of K, tau, sigma, k, omega.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Check a scenario and list every violated invariant.
    Validate { scenario: String },
    /// List the bundled scenarios.
    ListScenarios,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) => EXIT_IO,
            CliError::Scenario(_) => EXIT_VALIDATION,
            CliError::Sim(SimError::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Sim(SimError::Io(_)) | CliError::Io { .. } | CliError::Csv(_) => EXIT_IO,
            CliError::Sim(_) => EXIT_VALIDATION,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Output directory: explicit flag, then scenario setting, then `out/<name>`.
pub fn resolve_out_dir(flag: Option<&Path>, scenario: &Scenario) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name))
}

/// Summary plus the scenario's true frequency, as written to `summary.txt`.
pub fn summary_text(scenario: &Scenario, summary: &Summary) -> String {
    let mut s = format!("scenario = {}\nmode = {}\n", scenario.name, scenario.mode);
    s.push_str(&format!("true_omega = {:.6}\n", scenario.disturbance.frequency));
    s.push_str(&summary.to_string());
    if let Some(w) = summary.omega_hat {
        s.push_str(&format!("omega_error = {:.3e}\n", (w - scenario.disturbance.frequency).abs()));
    }
    s
}

/// Writes `trace.csv`, `summary.txt` and the three SVG plots into `dir`.
pub fn write_outputs(dir: &Path, scenario: &Scenario, trace: &TraceLog) -> Result<Summary, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    let f = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    trace.write_csv(io::BufWriter::new(f))?;
    let summary = trace.summary();
    let sp = dir.join("summary.txt");
    fs::write(&sp, summary_text(scenario, &summary)).map_err(io_err(&sp))?;

    let t = &trace.t;
    let charts = [
        (
            "y_delta.svg",
            line_chart(
                "Output and disturbance",
                "t, s",
                &[
                    Series { label: "y", x: t, y: &trace.y, color: "#1f77b4" },
                    Series { label: "delta", x: t, y: &trace.delta, color: "#d62728" },
                ],
            ),
        ),
        ("u.svg", line_chart("Control", "t, s", &[Series { label: "u", x: t, y: &trace.u, color: "#2ca02c" }])),
        (
            "theta.svg",
            line_chart(
                "Gradient vs finite-time estimate",
                "t, s",
                &[
                    Series { label: "theta_hat", x: t, y: &trace.theta_hat, color: "#ff7f0e" },
                    Series { label: "theta_f", x: t, y: &trace.theta_f, color: "#9467bd" },
                ],
            ),
        ),
    ];
    for (name, svg) in charts {
        let p = dir.join(name);
        fs::write(&p, svg).map_err(io_err(&p))?;
    }
    Ok(summary)
}

fn outcome_code(outcome: &RunOutcome) -> i32 {
    if outcome.is_completed() {
        EXIT_OK
    } else {
        EXIT_DIVERGENCE
    }
}

/// Runs one scenario into `dir`; returns the summary.
pub fn run_scenario(scenario: &Scenario, dir: &Path) -> Result<Summary, CliError> {
    info!("running {} into {}", scenario.name, dir.display());
    let trace = sim::run(scenario)?;
    write_outputs(dir, scenario, &trace)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "param",
    "value",
    "status",
    "omega_hat",
    "switch_time",
    "settling_time",
    "estimate_ready_time",
    "peak_abs_u",
    "final_abs_y",
    "estimator_ready",
    "error",
];

struct SweepRow {
    value: f64,
    code: i32,
    summary: Option<Summary>,
    ready_time: Option<f64>,
    error: String,
}

fn sweep_one(base: &Scenario, param: &str, value: f64, dir: &Path) -> SweepRow {
    let scenario = match base.with_param(param, value) {
        Ok(s) => s,
        Err(e) => {
            let error = e.to_string();
            return SweepRow { value, code: CliError::from(e).exit_code(), summary: None, ready_time: None, error };
        }
    };
    let sub = dir.join(format!("{param}_{value}"));
    let result = sim::run(&scenario).map_err(CliError::from).and_then(|trace| {
        let ready = trace.theta_f.iter().position(|v| v.is_finite()).map(|i| trace.t[i]);
        write_outputs(&sub, &scenario, &trace).map(|s| (s, ready))
    });
    match result {
        Ok((s, ready)) => SweepRow { value, code: outcome_code(&s.outcome), error: String::new(), summary: Some(s), ready_time: ready },
        Err(e) => SweepRow { value, code: e.exit_code(), summary: None, ready_time: None, error: e.to_string() },
    }
}

/// Runs every value in parallel and writes `sweep.csv`. Failed values are
/// recorded and do not stop the sweep; the worst exit code is returned.
pub fn sweep(base: &Scenario, param: &str, values: &[f64], dir: &Path) -> Result<i32, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows: Vec<SweepRow> = values.par_iter().map(|v| sweep_one(base, param, *v, dir)).collect();
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(SWEEP_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.16e}"));
    for r in &rows {
        let status = match (&r.summary, r.code) {
            (Some(s), _) => s.outcome.to_string(),
            (None, EXIT_VALIDATION) => "invalid".to_string(),
            (None, _) => "failed".to_string(),
        };
        let s = r.summary.as_ref();
        w.write_record([
            param.to_string(),
            format!("{}", r.value),
            status,
            opt(s.and_then(|s| s.omega_hat)),
            opt(s.and_then(|s| s.switch_time)),
            opt(s.and_then(|s| s.settling_time)),
            opt(r.ready_time),
            opt(s.map(|s| s.peak_u)),
            opt(s.map(|s| s.final_abs_y)),
            s.map_or(String::new(), |s| s.estimator_ready.to_string()),
            r.error.clone(),
        ])?;
        if r.code != EXIT_OK {
            warn!("{param} = {}: {}", r.value, if r.error.is_empty() { "diverged" } else { &r.error });
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows.iter().map(|r| r.code).max().unwrap_or(EXIT_OK))
}

fn describe(s: &Scenario) -> String {
    format!(
        "{:<6} {:<11} omega={} K={} duration={}s",
        s.name, s.mode, s.disturbance.frequency, s.estimator.gain, s.sim.duration
    )
}

/// Executes a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            for v in match &e {
                CliError::Scenario(s) => s.violations(),
                _ => &[],
            } {
                eprintln!("  - {v}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run { scenario, out, seed } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let dir = resolve_out_dir(out.as_deref(), &s);
            let summary = run_scenario(&s, &dir)?;
            print!("{}", summary_text(&s, &summary));
            Ok(outcome_code(&summary.outcome))
        }
        Command::Sweep { scenario, param, values, out } => {
            let s = load_scenario(&scenario)?;
            let dir = resolve_out_dir(out.as_deref(), &s).join(format!("sweep_{param}"));
            let code = sweep(&s, &param, &values, &dir)?;
            println!("wrote {}", dir.join("sweep.csv").display());
            Ok(code)
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!("ok: {}", describe(&s));
            Ok(EXIT_OK)
        }
        Command::ListScenarios => {
            for (name, _) in BUNDLED {
                let s = harmrej_core::scenario::load_bundled(name)?;
                println!("{}", describe(&s));
            }
            Ok(EXIT_OK)
        }
    }
}
