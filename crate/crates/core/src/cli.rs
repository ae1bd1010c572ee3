//! `bsn-aka` command line: `deploy`, `run` and `bench`.
//!
//! Exit codes: 0 when both ends agree on a key, 2 when the handshake does
//! not end in agreement, 1 on usage or configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::metrics::{format_real, storage_account, CostReport, Role};
use crate::nodes::FreshnessPolicy;
use crate::registry::{Deployment, RegistryError};
use crate::simnet::{
    AdversaryScript, Route, SessionOutcome, SessionRun, SimError, Transcript, World,
};
use crate::wire::{Hop, Message2};

pub const EXIT_AGREED: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Parser)]
#[command(
    name = "bsn-aka",
    version,
    about = "Two-tier body sensor network key agreement simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a deployment file with fresh hub, sensor and relay keys.
    Deploy {
        /// Number of sensors (at least 1).
        sensors: usize,
        /// Number of intermediate nodes (at least 1).
        intermediates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario file and write its transcript and cost report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Print per-n cost rows over honest sessions as CSV.
    Bench {
        /// Comma-separated sensor counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Clone, Args)]
pub struct RunOverrides {
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the freshness window (default 5).
    #[arg(long)]
    pub delta_t: Option<u32>,
    /// Override the per-hop delay (default 1).
    #[arg(long)]
    pub hop_delay: Option<u32>,
    /// Directory for transcript.txt and report.toml.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_delta_t() -> u32 {
    FreshnessPolicy::default().delta_t()
}

fn default_hop_delay() -> u32 {
    FreshnessPolicy::default().hop_delay()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_delta_t")]
    pub delta_t: u32,
    #[serde(default = "default_hop_delay")]
    pub hop_delay: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            delta_t: default_delta_t(),
            hop_delay: default_hop_delay(),
        }
    }
}

/// Replays the recorded IN→HN frame of an honest run `delay` ticks after
/// its timestamp.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub delay: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub transcript: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Scenario file contents. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub deployment: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sensor: usize,
    #[serde(default)]
    pub intermediate: usize,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub adversary: Vec<crate::simnet::AdversaryAction>,
    pub replay: Option<ReplayConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.deployment);
        if let Some(p) = self.output.transcript.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.report.as_mut() {
            fix(p);
        }
    }

    fn apply(&mut self, o: &RunOverrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = o.delta_t {
            self.policy.delta_t = d;
        }
        if let Some(h) = o.hop_delay {
            self.policy.hop_delay = h;
        }
        if let Some(dir) = &o.out {
            self.output.transcript = Some(dir.join("transcript.txt"));
            self.output.report = Some(dir.join("report.toml"));
        }
    }
}

/// What `run` produced, before anything is written.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: SessionOutcome,
    pub transcript: String,
    pub report: String,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.keys_agree() {
            EXIT_AGREED
        } else {
            EXIT_ABORTED
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn cmd_deploy(sensors: usize, intermediates: usize, seed: u64) -> Result<String, CliError> {
    if sensors == 0 || intermediates == 0 {
        return Err(CliError::Usage(
            "deploy needs at least one sensor and one intermediate".into(),
        ));
    }
    Ok(Deployment::generate(sensors, intermediates, seed).to_toml())
}

pub fn storage_summary(sensors: usize, intermediates: usize) -> String {
    let s = storage_account(sensors as u64, intermediates as u64);
    format!(
        "storage bits: SN = {}, IN = {}, HN = {}",
        s.sensor, s.intermediate, s.hub
    )
}

fn outcome_section(outcome: &SessionOutcome) -> String {
    let mut out = String::from("[outcome]\n");
    let _ = writeln!(out, "result = \"{}\"", outcome.name());
    match outcome {
        SessionOutcome::AgreedKeys { sn_key, hn_key } => {
            let _ = writeln!(out, "keysEqual = {}", outcome.keys_agree());
            let _ = writeln!(out, "snKey = \"{}\"", sn_key.0.to_hex());
            if let Some(h) = hn_key {
                let _ = writeln!(out, "hnKey = \"{}\"", h.0.to_hex());
            }
        }
        SessionOutcome::HubAccepted { hn_key } => {
            let _ = writeln!(out, "hnKey = \"{}\"", hn_key.0.to_hex());
        }
        SessionOutcome::AbortedAt { step, reason } => {
            let _ = writeln!(out, "step = \"{step}\"");
            let _ = writeln!(out, "reason = \"{}\"", reason.name());
        }
    }
    out
}

fn render(outcome: SessionOutcome, transcript: String, costs: &CostReport) -> RunResult {
    let report = format!("{}\n{}", outcome_section(&outcome), costs.to_text());
    RunResult {
        outcome,
        transcript,
        report,
    }
}

/// Executes a scenario that is already parsed and resolved.
pub fn cmd_run(config: &ScenarioConfig) -> Result<RunResult, CliError> {
    let bad = |message: String| CliError::Config {
        path: config.deployment.clone(),
        message,
    };
    let policy = FreshnessPolicy::new(config.policy.delta_t, config.policy.hop_delay)
        .map_err(|e| bad(e.to_string()))?;
    let deployment = Deployment::from_toml(&read(&config.deployment)?)?;
    let mut world = World::from_deployment(&deployment, policy)?;
    let route = Route::new(config.sensor, config.intermediate);
    let script = AdversaryScript {
        actions: config.adversary.clone(),
    };
    let run = world.run_session(route, &script, config.seed)?;
    let Some(replay) = &config.replay else {
        return Ok(render(
            run.outcome,
            run.transcript.to_file_string(),
            &run.costs,
        ));
    };
    let t_n =
        recorded_request_time(&run.transcript).ok_or(CliError::Sim(SimError::NothingToReplay))?;
    let replayed: SessionRun = world.replay_attack(&run.transcript, t_n + replay.delay)?;
    let transcript = run.transcript.to_file_string() + &replayed.transcript.to_file_string();
    Ok(render(replayed.outcome, transcript, &replayed.costs))
}

fn recorded_request_time(t: &Transcript) -> Option<u64> {
    let r = t.on_hop(Hop::InToHn).find(|r| r.delivered())?;
    Message2::decode(&r.bytes).ok().map(|m| m.t_n.0 as u64)
}

pub fn load_scenario(path: &Path, overrides: &RunOverrides) -> Result<ScenarioConfig, CliError> {
    let mut config =
        ScenarioConfig::from_toml(&read(path)?).map_err(|message| CliError::Config {
            path: path.to_owned(),
            message,
        })?;
    config.resolve(path.parent().unwrap_or(Path::new(".")));
    config.apply(overrides);
    Ok(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub trials: u64,
    pub sn_hashes: u64,
    pub sn_xors: u64,
    pub hn_hashes: u64,
    pub hn_xors: u64,
    pub sn_ms: f64,
    pub sn_mj: f64,
    pub hn_ms: f64,
    pub hn_mj: f64,
    pub hop_bits: [u64; 4],
}

pub const BENCH_HEADER: &str =
    "n,trials,sn_hashes,sn_xors,hn_hashes,hn_xors,sn_ms,sn_mj,hn_ms,hn_mj,hop1,hop2,hop3,hop4";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.trials,
            self.sn_hashes,
            self.sn_xors,
            self.hn_hashes,
            self.hn_xors,
            format_real(self.sn_ms),
            format_real(self.sn_mj),
            format_real(self.hn_ms),
            format_real(self.hn_mj),
            self.hop_bits[0],
            self.hop_bits[1],
            self.hop_bits[2],
            self.hop_bits[3],
        )
    }
}

/// Runs `trials` honest sessions per n, each in its own world seeded from
/// `seed + trial`, and checks every trial measured the same costs.
pub fn cmd_bench(ns: &[usize], trials: u64, seed: u64) -> Result<Vec<BenchRow>, CliError> {
    if ns.is_empty() || ns.contains(&0) || trials == 0 {
        return Err(CliError::Usage(
            "bench needs a non-empty list of positive n and at least one trial".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in ns {
        let mut row: Option<BenchRow> = None;
        for trial in 0..trials {
            let s = seed.wrapping_add(trial);
            let mut world =
                World::from_deployment(&Deployment::generate(n, 1, s), FreshnessPolicy::default())?;
            let run = world.run_honest(Route::new(trial as usize % n, 0), s)?;
            if !run.outcome.keys_agree() {
                return Err(CliError::Usage(format!(
                    "honest session failed at n={n}, trial {trial}: {:?}",
                    run.outcome
                )));
            }
            let c = &run.costs;
            let this = BenchRow {
                n,
                trials,
                sn_hashes: c.role(Role::Sensor).hash_count,
                sn_xors: c.role(Role::Sensor).xor_count,
                hn_hashes: c.role(Role::Hub).hash_count,
                hn_xors: c.role(Role::Hub).xor_count,
                sn_ms: c.sensor.time_ms,
                sn_mj: c.sensor.energy_mj,
                hn_ms: c.hub.time_ms,
                hn_mj: c.hub.energy_mj,
                hop_bits: c.bandwidth.0,
            };
            match &row {
                None => row = Some(this),
                Some(first) if *first != this => {
                    return Err(CliError::Usage(format!(
                        "costs varied across trials at n={n}: {first:?} vs {this:?}"
                    )))
                }
                Some(_) => {}
            }
        }
        rows.extend(row);
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Deploy {
            sensors,
            intermediates,
            seed,
            out,
        } => {
            let text = cmd_deploy(sensors, intermediates, seed)?;
            emit(&out, &text)?;
            eprintln!("{}", storage_summary(sensors, intermediates));
            Ok(EXIT_AGREED)
        }
        Command::Run {
            scenario,
            overrides,
        } => {
            let config = load_scenario(&scenario, &overrides)?;
            let result = cmd_run(&config)?;
            if let Some(dir) = &overrides.out {
                fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.clone(),
                    source,
                })?;
            }
            match &config.output.transcript {
                Some(p) => write(p, &result.transcript)?,
                None => print!("{}", result.transcript),
            }
            match &config.output.report {
                Some(p) => write(p, &result.report)?,
                None => print!("\n{}", result.report),
            }
            eprintln!("outcome: {}", describe(&result.outcome));
            Ok(result.exit_code())
        }
        Command::Bench {
            n,
            trials,
            seed,
            out,
        } => {
            let rows = cmd_bench(&n, trials, seed)?;
            emit(&out, &bench_csv(&rows))?;
            Ok(EXIT_AGREED)
        }
    }
}

fn describe(outcome: &SessionOutcome) -> String {
    match outcome {
        SessionOutcome::AbortedAt { step, reason } => format!("aborted at {step}: {reason}"),
        other if other.keys_agree() => "agreed keys".into(),
        other => other.name().into(),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_AGREED
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => {
            let _ = std::io::stdout().flush();
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
