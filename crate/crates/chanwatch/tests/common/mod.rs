#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chanwatch::config::RunConfig;
use chanwatch::core::{ChannelRef, RawMessage, Timestamp};
use chanwatch::llm::MockLlm;
use chanwatch::pipeline::{run_pipeline, RunError, RunOutcome, RunRequest, Services};
use chanwatch::sink::{HttpPoster, PostOutcome};
use chanwatch::source::{FixtureAdapter, SourceAdapter, SourceError};
use chanwatch::store::MemoryStore;
use chrono::{DateTime, Duration, Utc};
use tempfile::TempDir;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn repo_file(rel: &str) -> PathBuf {
    repo_root().join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(repo_file(rel)).unwrap()
}

pub fn ts(s: &str) -> Timestamp {
    DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
}

pub const DEMO_NOW: &str = "2025-03-10T06:00:00Z";

fn toml_path(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

/// Demo configuration rewritten into a temp dir: shipped channel list,
/// patterns, corpus and mock script; store, lock and reports under the temp
/// dir.
pub struct DemoWorkspace {
    pub dir: TempDir,
    pub config_path: PathBuf,
}

impl DemoWorkspace {
    pub fn new(extra_sinks: &str) -> Self {
        Self::with_llm(r#"provider = "mock""#, extra_sinks)
    }

    /// `llm` replaces the `[llm]` body; `mock_script` is added when absent.
    pub fn with_llm(llm: &str, extra_sinks: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let script = if llm.contains("mock_script") || !llm.contains("mock") {
            String::new()
        } else {
            format!("mock_script = {}\n", toml_path(&repo_file("fixtures/mock_llm.json")))
        };
        let text = format!(
            r#"topic = "finland"
topic_label = "Finland"
channel_list = {channels}
pattern_config = {patterns}
run_at_local = "06:00"
timezone = "UTC"

[store]
kind = "file"
path = "store/messages.jsonl"

[source]
kind = "fixture"
corpus = {corpus}

[llm]
{llm}
{script}retry_base_ms = 1

[[sink]]
kind = "file"
dir = "reports"
{extra_sinks}
"#,
            channels = toml_path(&repo_file("config/channels.toml")),
            patterns = toml_path(&repo_file("config/patterns.toml")),
            corpus = toml_path(&repo_file("fixtures/corpus.jsonl")),
        );
        let config_path = dir.path().join("chanwatch.toml");
        std::fs::write(&config_path, text).unwrap();
        Self { dir, config_path }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn report(&self, lang: &str) -> String {
        std::fs::read_to_string(self.path(&format!("reports/report_finland_{lang}_2025-03-10.txt"))).unwrap()
    }

    pub fn store_rows(&self) -> usize {
        std::fs::read_to_string(self.path("store/messages.jsonl"))
            .unwrap()
            .lines()
            .count()
    }

    /// Runs the CLI in-process; returns (exit code, stdout, stderr).
    pub fn cli(&self, args: &[&str]) -> (i32, String, String) {
        let mut argv = vec!["chanwatch", "--config", self.config_path.to_str().unwrap()];
        argv.extend_from_slice(args);
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = chanwatch::cli::run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }
}

/// Small self-contained setup: three messages in three channels, two of them
/// with public handles, one pattern set matching everything.
pub struct MiniSetup {
    pub dir: TempDir,
    pub config: RunConfig,
    pub messages: Vec<RawMessage>,
}

pub const MINI_NOW: &str = "2025-03-10T06:00:00Z";

impl MiniSetup {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("channels.toml"),
            r#"[[channel]]
channel_key = "alpha"
display_name = "Alpha"
public_handle = "alpha_pub"

[[channel]]
channel_key = "beta"
display_name = "Beta"

[[channel]]
channel_key = "gamma"
display_name = "Gamma"
public_handle = "gamma_pub"
"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("patterns.toml"),
            "[[pattern]]\ntopic = \"finland\"\nlang = \"en\"\npattern = \"Finland\"\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("mock.json"), r#"{"responses": []}"#).unwrap();
        let config = RunConfig::parse(
            r#"topic = "finland"
channel_list = "channels.toml"
pattern_config = "patterns.toml"
[store]
kind = "memory"
[source]
kind = "fixture"
corpus = "unused.jsonl"
retry_attempts = 1
[llm]
provider = "mock"
mock_script = "mock.json"
retry_attempts = 1
retry_base_ms = 1
[[sink]]
kind = "stdout"
"#,
            dir.path(),
        )
        .unwrap();
        let t0 = ts(MINI_NOW) - Duration::hours(10);
        let msg = |ch: &str, id: u64, k: i64, views: u64, forwards: u64| RawMessage {
            channel_key: ch.into(),
            source_message_id: id,
            posted_at: t0 + Duration::hours(k),
            text: format!("Finland item {id}"),
            views,
            forwards,
            fetched_at: ts(MINI_NOW),
        };
        let messages = vec![
            msg("alpha", 11, 0, 100, 10),
            msg("beta", 22, 1, 200, 0),
            msg("gamma", 33, 2, 300, 20),
        ];
        Self { dir, config, messages }
    }

    pub fn run(&self, llm: &MockLlm) -> Result<(RunOutcome, String), RunError> {
        self.run_with(llm, &FixtureAdapter::from_messages(self.messages.clone()))
    }

    pub fn run_with(&self, llm: &MockLlm, source: &dyn SourceAdapter) -> Result<(RunOutcome, String), RunError> {
        let store = MemoryStore::new();
        let poster = RecordingPoster::always(200);
        let mut out = Vec::new();
        let outcome = {
            let mut services = Services {
                store: &store,
                source,
                llm,
                poster: &poster,
                stdout: &mut out,
                env: &|_| None,
            };
            run_pipeline(&self.config, &mut services, &RunRequest::at(ts(MINI_NOW)))?
        };
        Ok((outcome, String::from_utf8(out).unwrap()))
    }
}

/// Records webhook bodies and answers with a scripted status per call.
type StatusFn = Box<dyn Fn(usize, &serde_json::Value) -> u16 + Send + Sync>;

pub struct RecordingPoster {
    status: StatusFn,
    pub bodies: Mutex<Vec<serde_json::Value>>,
}

impl RecordingPoster {
    pub fn always(code: u16) -> Self {
        Self {
            status: Box::new(move |_, _| code),
            bodies: Mutex::new(Vec::new()),
        }
    }
}

impl HttpPoster for RecordingPoster {
    fn post_json(&self, _url: &str, body: &serde_json::Value) -> PostOutcome {
        let mut bodies = self.bodies.lock().unwrap();
        bodies.push(body.clone());
        PostOutcome::Status((self.status)(bodies.len(), body))
    }
}

/// Deterministic synthetic source: `per_channel(i)` messages for channel `i`,
/// spread over the `days` before `until`. Every `hit_every`-th message
/// mentions Finland.
pub struct GeneratedSource {
    pub channels: Vec<ChannelRef>,
    pub total: usize,
    pub until: Timestamp,
    pub days: i64,
    pub hit_every: usize,
}

impl GeneratedSource {
    pub fn new(n_channels: usize, total: usize, until: Timestamp) -> Self {
        let channels = (0..n_channels)
            .map(|i| {
                ChannelRef::new(format!("gen_{i:03}"), format!("Generated {i}")).with_handle(format!("gen_{i:03}"))
            })
            .collect();
        Self {
            channels,
            total,
            until,
            days: 7,
            hit_every: 50,
        }
    }

    pub fn per_channel(&self, i: usize) -> usize {
        let n = self.channels.len();
        self.total / n + usize::from(i < self.total % n)
    }

    pub fn channel_list(&self) -> chanwatch::core::ChannelList {
        chanwatch::core::ChannelList::new(self.channels.clone()).unwrap()
    }

    pub fn message(&self, ch: usize, j: usize) -> RawMessage {
        let n = self.per_channel(ch) as i64;
        let span = self.days * 86_400;
        // Newest message sits one second before `until`.
        let offset = span - (j as i64 + 1) * span / n.max(1);
        let g = ch * 100_003 + j * 7_919;
        let text = if g.is_multiple_of(self.hit_every) {
            format!("Finland update {ch}/{j}: talks continue on border crossings and trade.")
        } else {
            format!("Regional bulletin {ch}/{j}: weather, markets and transport news of the day.")
        };
        RawMessage {
            channel_key: self.channels[ch].channel_key.clone(),
            source_message_id: 1_000 + j as u64,
            posted_at: self.until - Duration::seconds(span - offset.max(0)),
            text,
            views: (g % 50_000) as u64 + 10,
            forwards: (g % 97) as u64,
            fetched_at: self.until,
        }
    }
}

impl SourceAdapter for GeneratedSource {
    fn name(&self) -> &str {
        "generated"
    }

    fn fetch(
        &self,
        channel: &ChannelRef,
        since: Option<Timestamp>,
        until: Timestamp,
    ) -> Result<Vec<RawMessage>, SourceError> {
        let ch = self
            .channels
            .iter()
            .position(|c| c.channel_key == channel.channel_key)
            .ok_or_else(|| SourceError::ChannelNotFound(channel.channel_key.clone()))?;
        Ok((0..self.per_channel(ch))
            .map(|j| self.message(ch, j))
            .filter(|m| m.posted_at <= until && since.is_none_or(|s| m.posted_at > s))
            .collect())
    }
}
