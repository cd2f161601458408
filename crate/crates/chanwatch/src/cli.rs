//! Command-line interface. [`run`] is the whole program minus logging setup,
//! so tests can drive it in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use chanwatch_core::Timestamp;
use chrono::{NaiveDate, SubsecRound, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, SinkConfig};
use crate::pipeline::{
    open_backends, open_source, open_store, run_ingest, run_pipeline, RunError, RunRequest, RunStatus, Services,
};
use crate::schedule::{local_instant, next_run_after};
use crate::sink::ReqwestPoster;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_DEGRADED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "chanwatch",
    version,
    about = "Daily topic digests from public messaging channels"
)]
pub struct Cli {
    /// Main configuration file.
    #[arg(long, short, global = true, default_value = "chanwatch.toml")]
    pub config: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    pub log_format: LogFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch new messages from every channel into the store.
    Ingest {
        #[arg(long, value_parser = parse_now)]
        now: Option<Timestamp>,
    },
    /// Run the full pipeline once.
    Run {
        #[arg(long)]
        window_hours: Option<u32>,
        #[arg(long)]
        topic: Option<String>,
        /// Print both reports instead of delivering them.
        #[arg(long)]
        dry_run: bool,
        /// Replace the configured sinks: stdout, file:DIR, webhook or
        /// webhook:ENV_VAR (the variable holds the URL).
        #[arg(long = "sink", value_parser = SinkConfig::parse_override)]
        sinks: Vec<SinkConfig>,
        /// Window end (RFC 3339); defaults to the current time.
        #[arg(long, value_parser = parse_now)]
        now: Option<Timestamp>,
        /// Report on stored data without fetching first.
        #[arg(long)]
        no_ingest: bool,
    },
    /// Re-render the reports of a past day from stored data, without ingest.
    Render {
        /// Local date whose scheduled run to reproduce.
        #[arg(long)]
        date: NaiveDate,
        #[arg(long)]
        topic: Option<String>,
        /// Deliver to these sinks instead of printing.
        #[arg(long = "sink", value_parser = SinkConfig::parse_override)]
        sinks: Vec<SinkConfig>,
    },
    /// Parse every configuration file and report problems.
    ValidateConfig,
    /// Run every day at the configured local time.
    Serve {
        /// Stop after this many runs.
        #[arg(long)]
        max_runs: Option<u64>,
    },
}

fn parse_now(s: &str) -> Result<Timestamp, String> {
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
        .map_err(|e| format!("expected an RFC 3339 timestamp such as 2025-03-10T06:00:00Z ({e})"))
}

/// Parses arguments; `Err` carries the exit code after printing usage output.
pub fn parse(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<Cli, i32> {
    Cli::try_parse_from(args).map_err(|e| {
        let is_info = matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        );
        let rendered = e.render().to_string();
        if is_info {
            let _ = write!(stdout, "{rendered}");
            EXIT_OK
        } else {
            let _ = write!(stderr, "{rendered}");
            EXIT_USAGE
        }
    })
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::ValidateConfig => validate_config(&cli.config, stdout),
        Command::Ingest { now } => ingest(&cli.config, now, stdout),
        Command::Run {
            window_hours,
            topic,
            dry_run,
            sinks,
            now,
            no_ingest,
        } => {
            let mut req = RunRequest::at(now.unwrap_or_else(|| Utc::now().trunc_subsecs(0)));
            req.window_hours = window_hours;
            req.topic = topic;
            req.dry_run = dry_run;
            req.sinks = (!sinks.is_empty()).then_some(sinks);
            req.ingest = !no_ingest;
            RunConfig::load(&cli.config)
                .map_err(RunError::from)
                .and_then(|c| run_once(&c, &req, stdout))
                .map(RunStatus::exit_code)
        }
        Command::Render { date, topic, sinks } => RunConfig::load(&cli.config)
            .map_err(RunError::from)
            .and_then(|c| {
                let mut req = RunRequest::at(local_instant(date, c.run_at_local, c.timezone));
                req.topic = topic;
                req.ingest = false;
                req.dry_run = sinks.is_empty();
                req.sinks = (!sinks.is_empty()).then_some(sinks);
                run_once(&c, &req, stdout)
            })
            .map(RunStatus::exit_code),
        Command::Serve { max_runs } => serve(&cli.config, max_runs, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            tracing::error!(error = %e, "run failed");
            let _ = writeln!(stderr, "chanwatch: {e}");
            EXIT_FAILED
        }
    }
}

pub fn run(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    match parse(args, stdout, stderr) {
        Ok(cli) => execute(cli, stdout, stderr),
        Err(code) => code,
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

fn run_once(config: &RunConfig, req: &RunRequest, stdout: &mut dyn Write) -> Result<RunStatus, RunError> {
    let backends = open_backends(config)?;
    let poster = ReqwestPoster::default();
    let mut services = Services {
        store: backends.store.as_ref(),
        source: backends.source.as_ref(),
        llm: backends.llm.as_ref(),
        poster: &poster,
        stdout,
        env: &env_var,
    };
    let outcome = run_pipeline(config, &mut services, req)?;
    let receipts: Vec<String> = outcome
        .reports
        .iter()
        .flat_map(|r| {
            r.receipts.iter().map(move |d| {
                format!(
                    "{}:{}:{}/{}:{:?}",
                    r.language, d.sink_kind, d.parts_sent, d.parts_total, d.status
                )
            })
        })
        .collect();
    tracing::info!(
        status = ?outcome.status,
        window_start = %chanwatch_core::message::iso(&outcome.window.start()),
        window_end = %chanwatch_core::message::iso(&outcome.window.end()),
        fetched = outcome.ingest.as_ref().map_or(0, |i| i.total_fetched()),
        stored = outcome.ingest.as_ref().map_or(0, |i| i.total_stored()),
        failed_channels = outcome.ingest.as_ref().map_or(0, |i| i.failed_channels().count()),
        filtered = outcome.filtered_count,
        receipts = %receipts.join(","),
        warnings = outcome.warnings.len(),
        "run finished"
    );
    Ok(outcome.status)
}

fn ingest(path: &std::path::Path, now: Option<Timestamp>, stdout: &mut dyn Write) -> Result<i32, RunError> {
    let config = RunConfig::load(path)?;
    let store = open_store(&config)?;
    let source = open_source(&config)?;
    let until = now.unwrap_or_else(|| Utc::now().trunc_subsecs(0));
    let summary = run_ingest(&config, store.as_ref(), source.as_ref(), until)?;
    let failed = summary.failed_channels().count();
    let _ = writeln!(
        stdout,
        "ingested {} new of {} fetched messages from {} channels ({} failed)",
        summary.total_stored(),
        summary.total_fetched(),
        summary.per_channel.len(),
        failed
    );
    for (k, e) in summary.failed_channels() {
        tracing::warn!(channel = k, error = e, "channel failed");
    }
    Ok(if failed > 0 { EXIT_DEGRADED } else { EXIT_OK })
}

fn validate_config(path: &std::path::Path, stdout: &mut dyn Write) -> Result<i32, RunError> {
    let config = RunConfig::load(path)?;
    let channels = config.load_channels()?;
    let sets = config.load_patterns()?;
    let topic = sets.iter().find(|s| s.topic() == config.topic).ok_or_else(|| {
        crate::config::ConfigParseError::new(None, format!("no patterns for topic '{}'", config.topic))
            .in_file(&config.pattern_config_path)
    })?;
    if let crate::config::SourceKind::Fixture { corpus } = &config.source.kind {
        crate::source::FixtureAdapter::open(corpus)?;
    }
    if let Some(script) = &config.llm.mock_script {
        crate::llm::MockScript::load(script)?;
    }
    let _ = writeln!(
        stdout,
        "ok: {} channels, {} pattern sets ({} patterns for '{}'), {} sinks",
        channels.len(),
        sets.len(),
        topic.specs().len(),
        config.topic,
        config.sinks.len()
    );
    Ok(EXIT_OK)
}

fn serve(path: &std::path::Path, max_runs: Option<u64>, stdout: &mut dyn Write) -> Result<i32, RunError> {
    let mut runs = 0u64;
    let mut last = EXIT_OK;
    while max_runs.is_none_or(|m| runs < m) {
        // Reload each day so edits to the main config take effect too.
        let config = RunConfig::load(path)?;
        let now = Utc::now();
        let next = next_run_after(now, config.run_at_local, config.timezone);
        tracing::info!(next_run = %chanwatch_core::message::iso(&next), "sleeping until next run");
        if let Ok(wait) = (next - now).to_std() {
            std::thread::sleep(wait);
        }
        // A failed day is logged and not retried; the operator reruns it.
        last = match run_once(&config, &RunRequest::at(next), stdout) {
            Ok(status) => status.exit_code(),
            Err(e) => {
                tracing::error!(error = %e, "scheduled run failed");
                EXIT_FAILED
            }
        };
        runs += 1;
    }
    Ok(last)
}
