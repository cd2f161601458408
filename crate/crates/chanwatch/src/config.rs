//! Configuration files.
//!
//! Three TOML files drive a run:
//!
//! * the **channel list**, one `[[channel]]` table per channel with
//!   `channel_key`, `display_name` and optional `public_handle`;
//! * the **pattern config**, one `[[pattern]]` table per regex with `topic`,
//!   `lang` (`en`, `ru`, `uk`, `other`), `pattern` and optional
//!   `case_insensitive` (default `true`). Write patterns as TOML literal
//!   strings (`'...'`) so backslashes reach the regex engine untouched;
//! * the **main config** ([`RunConfig`]) referencing the other two by path.
//!
//! Secrets never live in these files: they name environment variables instead.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chanwatch_core::chunk::{DEFAULT_CHUNK_LIMIT, MIN_CHUNK_LIMIT};
use chanwatch_core::filter::PatternCompileError;
use chanwatch_core::message::ChannelListError;
use chanwatch_core::metrics::DEFAULT_VIRALITY_THRESHOLD;
use chanwatch_core::prompt::DEFAULT_CONTEXT_BUDGET;
use chanwatch_core::report::default_topic_label;
use chanwatch_core::{ChannelList, ChannelRef, LanguageTag, PatternSet, PatternSpec};
use chrono::NaiveTime;
use serde::{Deserialize, Serialize};
use toml::Spanned;

/// A configuration file that cannot be used, with the 1-based line at fault
/// when one can be named.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfigParseError {
    pub path: Option<String>,
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{p}:{l}: {}", self.reason),
            (Some(p), None) => write!(f, "{p}: {}", self.reason),
            (None, Some(l)) => write!(f, "line {l}: {}", self.reason),
            (None, None) => f.write_str(&self.reason),
        }
    }
}

impl ConfigParseError {
    pub fn new(line: Option<usize>, reason: impl Into<String>) -> Self {
        Self {
            path: None,
            line,
            reason: reason.into(),
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }

    fn from_toml(text: &str, err: toml::de::Error) -> Self {
        let line = err.span().map(|s| line_of(text, s.start));
        Self::new(line, err.message().trim().to_string())
    }
}

/// 1-based line containing byte `offset`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn span_line<T>(text: &str, s: &Spanned<T>) -> usize {
    line_of(text, s.span().start)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    #[serde(default)]
    channel: Vec<Spanned<ChannelEntry>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ChannelEntry {
    channel_key: String,
    display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    public_handle: Option<String>,
}

pub fn load_channel_list(config_text: &str) -> Result<ChannelList, ConfigParseError> {
    let file: ChannelFile = toml::from_str(config_text).map_err(|e| ConfigParseError::from_toml(config_text, e))?;
    if file.channel.is_empty() {
        return Err(ConfigParseError::new(None, "no channels"));
    }
    let lines: Vec<usize> = file.channel.iter().map(|c| span_line(config_text, c)).collect();
    let channels = file
        .channel
        .into_iter()
        .map(|c| {
            let c = c.into_inner();
            ChannelRef {
                channel_key: c.channel_key,
                display_name: c.display_name,
                public_handle: c.public_handle,
            }
        })
        .collect();
    ChannelList::new(channels).map_err(|e| match e {
        ChannelListError::Duplicate { key, first, second } => ConfigParseError::new(
            Some(lines[second]),
            format!("duplicate channel_key '{key}' (first defined on line {})", lines[first]),
        ),
        ChannelListError::EmptyKey { index } => {
            ConfigParseError::new(Some(lines[index]), "channel_key must not be empty")
        }
        ChannelListError::EmptyHandle { key } => {
            ConfigParseError::new(None, format!("public_handle of '{key}' must not be empty"))
        }
    })
}

/// Writes a channel list in the format [`load_channel_list`] reads.
pub fn write_channel_list(list: &ChannelList) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        channel: Vec<&'a ChannelRef>,
    }
    toml::to_string(&Out {
        channel: list.iter().collect(),
    })
    .expect("channel list serializes")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    #[serde(default)]
    pattern: Vec<Spanned<PatternEntry>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternEntry {
    topic: String,
    lang: String,
    pattern: String,
    #[serde(default = "yes")]
    case_insensitive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PatternConfigError {
    #[error(transparent)]
    Parse(#[from] ConfigParseError),
    #[error(transparent)]
    Compile(#[from] PatternCompileError),
}

/// Parses a pattern config into one [`PatternSet`] per topic, in order of
/// first appearance, and compile-checks every pattern.
pub fn load_pattern_config(config_text: &str, source_path: &str) -> Result<Vec<PatternSet>, PatternConfigError> {
    let file: PatternFile = toml::from_str(config_text).map_err(|e| ConfigParseError::from_toml(config_text, e))?;
    if file.pattern.is_empty() {
        return Err(ConfigParseError::new(None, "no patterns").into());
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<PatternSpec>> = HashMap::new();
    for entry in file.pattern {
        let line = span_line(config_text, &entry);
        let e = entry.into_inner();
        if e.topic.trim().is_empty() {
            return Err(ConfigParseError::new(Some(line), "topic must not be empty").into());
        }
        let language = LanguageTag::from_str(&e.lang).map_err(|reason| ConfigParseError::new(Some(line), reason))?;
        if !groups.contains_key(&e.topic) {
            order.push(e.topic.clone());
        }
        groups.entry(e.topic.clone()).or_default().push(PatternSpec {
            topic: e.topic,
            language,
            pattern: e.pattern,
            case_insensitive: e.case_insensitive,
        });
    }
    let mut sets = Vec::with_capacity(order.len());
    for topic in order {
        let specs = groups.remove(&topic).unwrap_or_default();
        let set = PatternSet::new(topic, specs, source_path).map_err(|e| ConfigParseError::new(None, e.to_string()))?;
        set.check()?;
        sets.push(set);
    }
    Ok(sets)
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StoreConfig {
    /// JSON-lines append log.
    File {
        path: PathBuf,
    },
    Memory,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceKind {
    /// Replays a JSON-lines corpus file.
    Fixture { corpus: PathBuf },
    /// HTTP message bridge in front of the messaging platform.
    Http { base_url: String, token_env: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub concurrency: usize,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSourceConfig {
    kind: String,
    corpus: Option<PathBuf>,
    base_url: Option<String>,
    token_env: Option<String>,
    #[serde(default = "default_concurrency")]
    concurrency: usize,
    #[serde(default = "default_attempts")]
    retry_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    retry_base_ms: u64,
}

impl RawSourceConfig {
    fn resolve(self) -> Result<SourceConfig, String> {
        let kind = match (self.kind.as_str(), self.corpus, self.base_url) {
            ("fixture", Some(corpus), None) if self.token_env.is_none() => SourceKind::Fixture { corpus },
            ("fixture", _, _) => return Err("source kind \"fixture\" takes exactly `corpus`".into()),
            ("http", None, Some(base_url)) => SourceKind::Http {
                base_url,
                token_env: self.token_env.unwrap_or_else(|| "CHANWATCH_SOURCE_TOKEN".into()),
            },
            ("http", _, _) => return Err("source kind \"http\" takes `base_url` and optional `token_env`".into()),
            (other, _, _) => return Err(format!("unknown source kind '{other}' (expected fixture or http)")),
        };
        Ok(SourceConfig {
            kind,
            concurrency: self.concurrency,
            retry_attempts: self.retry_attempts,
            retry_base_ms: self.retry_base_ms,
        })
    }
}

fn default_concurrency() -> usize {
    8
}
fn default_attempts() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    2000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProvider {
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Table-driven mock, see [`crate::llm::MockScript`].
    Mock,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmProvider,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_budget")]
    pub budget_chars: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_llm_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    pub mock_script: Option<PathBuf>,
}

fn default_model() -> String {
    "gpt-4o".into()
}
fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_budget() -> usize {
    DEFAULT_CONTEXT_BUDGET
}
fn default_llm_timeout() -> u64 {
    120
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SinkConfig {
    Webhook {
        /// Environment variable holding the URL. URLs are secrets and never
        /// appear in config files.
        #[serde(default = "default_webhook_env")]
        url_env: String,
        #[serde(default = "default_chunk_limit")]
        chunk_limit_chars: usize,
    },
    File {
        dir: PathBuf,
    },
    Stdout,
}

pub const DEFAULT_WEBHOOK_ENV: &str = "CHANWATCH_WEBHOOK_URL";

fn default_webhook_env() -> String {
    DEFAULT_WEBHOOK_ENV.into()
}

fn default_chunk_limit() -> usize {
    DEFAULT_CHUNK_LIMIT
}

impl SinkConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SinkConfig::Webhook { .. } => "webhook",
            SinkConfig::File { .. } => "file",
            SinkConfig::Stdout => "stdout",
        }
    }

    /// Parses a `--sink` override: `stdout`, `file:DIR`, `webhook` or
    /// `webhook:ENV_VAR`.
    pub fn parse_override(s: &str) -> Result<Self, String> {
        let webhook = |var: &str| SinkConfig::Webhook {
            url_env: var.into(),
            chunk_limit_chars: DEFAULT_CHUNK_LIMIT,
        };
        match s.split_once(':') {
            None if s == "stdout" => Ok(SinkConfig::Stdout),
            None if s == "webhook" => Ok(webhook(DEFAULT_WEBHOOK_ENV)),
            Some(("file", dir)) if !dir.is_empty() => Ok(SinkConfig::File { dir: dir.into() }),
            Some(("webhook", var)) if is_env_name(var) => Ok(webhook(var)),
            _ => Err(format!(
                "invalid sink '{s}' (expected stdout, file:DIR, webhook or webhook:ENV_VAR)"
            )),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            SinkConfig::Webhook {
                url_env,
                chunk_limit_chars,
            } => {
                if !is_env_name(url_env) {
                    return Err(format!("url_env '{url_env}' is not an environment variable name"));
                }
                if *chunk_limit_chars < MIN_CHUNK_LIMIT {
                    return Err(format!("chunk_limit_chars must be at least {MIN_CHUNK_LIMIT}"));
                }
                Ok(())
            }
            SinkConfig::File { dir } if dir.as_os_str().is_empty() => Err("file sink needs a directory".into()),
            _ => Ok(()),
        }
    }
}

/// Keeps URLs (which contain ':' and '/') out of `url_env`.
fn is_env_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') && !s.as_bytes()[0].is_ascii_digit()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    topic: String,
    topic_label: Option<String>,
    channel_list: PathBuf,
    pattern_config: PathBuf,
    #[serde(default = "default_window")]
    window_hours: u32,
    #[serde(default = "default_run_at")]
    run_at_local: String,
    #[serde(default = "default_timezone")]
    timezone: String,
    #[serde(default = "default_virality")]
    virality_threshold: f64,
    lock_dir: Option<PathBuf>,
    store: StoreConfig,
    source: RawSourceConfig,
    llm: LlmConfig,
    #[serde(default)]
    sink: Vec<Spanned<SinkConfig>>,
}

fn default_window() -> u32 {
    24
}
fn default_run_at() -> String {
    "06:00".into()
}
fn default_timezone() -> String {
    "UTC".into()
}
fn default_virality() -> f64 {
    DEFAULT_VIRALITY_THRESHOLD
}

/// The main configuration file, with relative paths resolved against the
/// directory of the file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub topic: String,
    pub topic_label: String,
    pub channel_list_path: PathBuf,
    pub pattern_config_path: PathBuf,
    pub window_hours: u32,
    pub run_at_local: NaiveTime,
    pub timezone: chrono_tz::Tz,
    pub virality_threshold: f64,
    pub lock_dir: PathBuf,
    pub store: StoreConfig,
    pub source: SourceConfig,
    pub llm: LlmConfig,
    pub sinks: Vec<SinkConfig>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigParseError> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| ConfigParseError::from_toml(text, e))?;
        let fail = |reason: String| Err(ConfigParseError::new(None, reason));
        if raw.topic.trim().is_empty() {
            return fail("topic must not be empty".into());
        }
        if raw.window_hours < 1 {
            return fail("window_hours must be at least 1".into());
        }
        if !(raw.virality_threshold >= 0.0 && raw.virality_threshold.is_finite()) {
            return fail("virality_threshold must be a non-negative number".into());
        }
        if raw.sink.is_empty() {
            return fail("at least one [[sink]] is required".into());
        }
        for s in &raw.sink {
            if let Err(reason) = s.get_ref().validate() {
                return Err(ConfigParseError::new(Some(span_line(text, s)), reason));
            }
        }
        let source = raw
            .source
            .clone()
            .resolve()
            .map_err(|r| ConfigParseError::new(None, r))?;
        if source.concurrency == 0 {
            return fail("source.concurrency must be at least 1".into());
        }
        if raw.llm.budget_chars == 0 {
            return fail("llm.budget_chars must be positive".into());
        }
        if raw.llm.provider == LlmProvider::Mock && raw.llm.mock_script.is_none() {
            return fail("llm.provider = \"mock\" needs llm.mock_script".into());
        }
        let run_at_local = NaiveTime::parse_from_str(&raw.run_at_local, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(&raw.run_at_local, "%H:%M:%S"))
            .map_err(|_| ConfigParseError::new(None, format!("run_at_local '{}' is not HH:MM", raw.run_at_local)))?;
        let timezone: chrono_tz::Tz = raw
            .timezone
            .parse()
            .map_err(|_| ConfigParseError::new(None, format!("unknown timezone '{}'", raw.timezone)))?;

        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let store = match raw.store {
            StoreConfig::File { path } => StoreConfig::File { path: resolve(&path) },
            StoreConfig::Memory => StoreConfig::Memory,
        };
        let mut source = source;
        if let SourceKind::Fixture { corpus } = &source.kind {
            source.kind = SourceKind::Fixture {
                corpus: resolve(corpus),
            };
        }
        let mut llm = raw.llm;
        llm.mock_script = llm.mock_script.as_deref().map(resolve);
        let sinks = raw
            .sink
            .into_iter()
            .map(|s| match s.into_inner() {
                SinkConfig::File { dir } => SinkConfig::File { dir: resolve(&dir) },
                other => other,
            })
            .collect();
        let lock_dir = match (&raw.lock_dir, &store) {
            (Some(d), _) => resolve(d),
            (None, StoreConfig::File { path }) => path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| base_dir.to_path_buf()),
            (None, StoreConfig::Memory) => base_dir.to_path_buf(),
        };
        Ok(Self {
            topic_label: raw.topic_label.unwrap_or_else(|| default_topic_label(&raw.topic)),
            topic: raw.topic,
            channel_list_path: resolve(&raw.channel_list),
            pattern_config_path: resolve(&raw.pattern_config),
            window_hours: raw.window_hours,
            run_at_local,
            timezone,
            virality_threshold: raw.virality_threshold,
            lock_dir,
            store,
            source,
            llm,
            sinks,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigParseError> {
        let text = read_config(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).map_err(|e| e.in_file(path))
    }

    pub fn load_channels(&self) -> Result<ChannelList, ConfigParseError> {
        let text = read_config(&self.channel_list_path)?;
        load_channel_list(&text).map_err(|e| e.in_file(&self.channel_list_path))
    }

    pub fn load_patterns(&self) -> Result<Vec<PatternSet>, PatternConfigError> {
        let text = read_config(&self.pattern_config_path)?;
        let path = self.pattern_config_path.display().to_string();
        load_pattern_config(&text, &path).map_err(|e| match e {
            PatternConfigError::Parse(p) => p.in_file(&self.pattern_config_path).into(),
            other => other,
        })
    }

    /// The pattern set of this config's topic.
    pub fn topic_patterns(&self) -> Result<PatternSet, PatternConfigError> {
        self.load_patterns()?
            .into_iter()
            .find(|s| s.topic() == self.topic)
            .ok_or_else(|| {
                ConfigParseError::new(None, format!("no patterns for topic '{}'", self.topic))
                    .in_file(&self.pattern_config_path)
                    .into()
            })
    }
}

pub(crate) fn read_config(path: &Path) -> Result<String, ConfigParseError> {
    std::fs::read_to_string(path).map_err(|e| ConfigParseError::new(None, format!("cannot read: {e}")).in_file(path))
}

/// Byte range of line `line` (1-based) in `text`; test helper for error spans.
#[doc(hidden)]
pub fn line_range(text: &str, line: usize) -> Range<usize> {
    let mut start = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return start..start + l.len();
        }
        start += l.len();
    }
    text.len()..text.len()
}
