//! Pulling channel messages into the store.
//!
//! Adapters are pull-based: given a channel and a `(since, until]` range they
//! return the channel's posts. [`sync_all`] drives one adapter over a channel
//! list with a per-channel cursor (the latest stored timestamp), bounded
//! parallelism and retries.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chanwatch_core::{ChannelList, ChannelRef, RawMessage, Timestamp};
use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::config::ConfigParseError;
use crate::store::{MessageStore, StoreError};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SourceError {
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("channel not found: {0}")]
    ChannelNotFound(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
}

impl SourceError {
    fn is_retryable(&self) -> bool {
        !matches!(self, SourceError::ChannelNotFound(_))
    }
}

pub trait SourceAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Upstream request budget, in requests per minute.
    fn rate_limit_hint(&self) -> Option<u32> {
        None
    }

    /// `false` when the adapter must not be called from several threads at
    /// once; [`sync_all`] then fetches one channel at a time.
    fn concurrent(&self) -> bool {
        true
    }

    /// Posts of `channel` with `since < posted_at <= until`, or the whole
    /// history up to `until` when `since` is `None`.
    fn fetch(
        &self,
        channel: &ChannelRef,
        since: Option<Timestamp>,
        until: Timestamp,
    ) -> Result<Vec<RawMessage>, SourceError>;
}

#[derive(Clone, Copy, Debug)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base: Duration::from_secs(2),
        }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt `k` (0-based): `base * 2^k`.
    pub fn backoff(&self, k: u32) -> Duration {
        self.base.saturating_mul(1u32 << k.min(16))
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or
    /// `attempts` calls have been made.
    pub fn run<T, E: std::fmt::Display>(
        &self,
        what: &str,
        mut op: impl FnMut() -> Result<T, E>,
        retryable: impl Fn(&E) -> Option<Option<Duration>>,
    ) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut k = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    let hint = match retryable(&e) {
                        Some(hint) if k + 1 < attempts => hint,
                        _ => return Err(e),
                    };
                    let delay = self.backoff(k).max(hint.unwrap_or_default());
                    tracing::warn!(op = what, attempt = k + 1, error = %e, delay_ms = delay.as_millis() as u64, "retrying");
                    std::thread::sleep(delay);
                    k += 1;
                }
            }
        }
    }
}

/// [`SourceAdapter::fetch`] with retries, plus a check of the adapter's
/// output: foreign or out-of-range posts and invalid records are rejected.
pub fn fetch_since(
    adapter: &dyn SourceAdapter,
    channel: &ChannelRef,
    since: Option<Timestamp>,
    until: Timestamp,
    policy: &RetryPolicy,
) -> Result<Vec<RawMessage>, SourceError> {
    let what = format!("fetch {}", channel.channel_key);
    let msgs = policy.run(
        &what,
        || adapter.fetch(channel, since, until),
        |e: &SourceError| match e {
            SourceError::RateLimited { retry_after } => Some(*retry_after),
            e if e.is_retryable() => Some(None),
            _ => None,
        },
    )?;
    for m in &msgs {
        let in_range = since.is_none_or(|s| s < m.posted_at) && m.posted_at <= until;
        if m.channel_key != channel.channel_key || !in_range {
            return Err(SourceError::SourceUnreachable(format!(
                "{} returned {} outside the requested channel or range",
                adapter.name(),
                m.key()
            )));
        }
        m.validate()
            .map_err(|e| SourceError::SourceUnreachable(format!("{}: {e}", adapter.name())))?;
    }
    Ok(msgs)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ChannelIngest {
    pub fetched: usize,
    pub stored: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub per_channel: BTreeMap<String, ChannelIngest>,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
}

impl IngestSummary {
    pub fn total_fetched(&self) -> usize {
        self.per_channel.values().map(|c| c.fetched).sum()
    }

    pub fn total_stored(&self) -> usize {
        self.per_channel.values().map(|c| c.stored).sum()
    }

    pub fn failed_channels(&self) -> impl Iterator<Item = (&str, &str)> {
        self.per_channel
            .iter()
            .filter_map(|(k, c)| c.error.as_deref().map(|e| (k.as_str(), e)))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IngestOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            concurrency: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// Spaces request starts at least `interval` apart across threads.
struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    fn new(rpm: Option<u32>) -> Option<Self> {
        let rpm = rpm.filter(|r| *r > 0)?;
        Some(Self {
            interval: Duration::from_secs(60) / rpm,
            next: Mutex::new(Instant::now()),
        })
    }

    fn wait(&self) {
        let start = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let start = (*next).max(Instant::now());
            *next = start + self.interval;
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }
}

/// Fetches every channel since its latest stored post and stores the result.
/// A failing channel is recorded in its summary entry and never affects the
/// others; an unavailable store aborts the sweep.
pub fn sync_all(
    adapter: &dyn SourceAdapter,
    channels: &ChannelList,
    until: Timestamp,
    store: &dyn MessageStore,
    opts: &IngestOptions,
) -> Result<IngestSummary, StoreError> {
    let started_at = Utc::now().trunc_subsecs(0);
    let list = channels.as_slice();
    let workers = if adapter.concurrent() {
        opts.concurrency.clamp(1, list.len().max(1))
    } else {
        1
    };
    let pacer = Pacer::new(adapter.rate_limit_hint());
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<ChannelIngest>>> = Mutex::new(vec![None; list.len()]);
    let fatal: Mutex<Option<StoreError>> = Mutex::new(None);

    let work = || loop {
        if abort.load(Ordering::Relaxed) {
            return;
        }
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(ch) = list.get(i) else { return };
        let outcome = ingest_channel(adapter, ch, until, store, &opts.retry, pacer.as_ref());
        match outcome {
            Ok(entry) => results.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(entry),
            Err(e) => {
                abort.store(true, Ordering::Relaxed);
                fatal.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
                return;
            }
        }
    };
    std::thread::scope(|s| {
        for _ in 1..workers {
            s.spawn(work);
        }
        work();
    });

    if let Some(e) = fatal.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let per_channel = list
        .iter()
        .zip(results.into_inner().unwrap_or_else(|p| p.into_inner()))
        .map(|(ch, r)| (ch.channel_key.clone(), r.unwrap_or_default()))
        .collect();
    Ok(IngestSummary {
        per_channel,
        started_at,
        finished_at: Utc::now().trunc_subsecs(0),
    })
}

fn ingest_channel(
    adapter: &dyn SourceAdapter,
    ch: &ChannelRef,
    until: Timestamp,
    store: &dyn MessageStore,
    retry: &RetryPolicy,
    pacer: Option<&Pacer>,
) -> Result<ChannelIngest, StoreError> {
    let since = store.latest_timestamp(&ch.channel_key)?;
    if since.is_some_and(|s| s >= until) {
        return Ok(ChannelIngest::default());
    }
    if let Some(p) = pacer {
        p.wait();
    }
    match fetch_since(adapter, ch, since, until, retry) {
        Ok(msgs) => {
            let count = match store.put_messages(&msgs) {
                Ok(c) => c,
                Err(StoreError::InvalidMessage(e)) => {
                    return Ok(ChannelIngest {
                        fetched: msgs.len(),
                        stored: 0,
                        error: Some(e.to_string()),
                    })
                }
                Err(e) => return Err(e),
            };
            tracing::debug!(channel = %ch.channel_key, fetched = msgs.len(), stored = count.inserted, "channel ingested");
            Ok(ChannelIngest {
                fetched: msgs.len(),
                stored: count.inserted,
                error: None,
            })
        }
        Err(e) => {
            tracing::warn!(channel = %ch.channel_key, error = %e, "channel fetch failed");
            Ok(ChannelIngest {
                fetched: 0,
                stored: 0,
                error: Some(e.to_string()),
            })
        }
    }
}

/// Replays a recorded corpus: a JSON-lines file of [`RawMessage`] records with
/// fields `channel_key`, `source_message_id`, `posted_at`, `text`, `views`,
/// `forwards`, `fetched_at` (timestamps RFC 3339, UTC, whole seconds).
#[derive(Clone, Debug, Default)]
pub struct FixtureAdapter {
    by_channel: BTreeMap<String, Vec<RawMessage>>,
}

impl FixtureAdapter {
    pub fn from_messages(messages: impl IntoIterator<Item = RawMessage>) -> Self {
        let mut by_channel: BTreeMap<String, Vec<RawMessage>> = BTreeMap::new();
        for m in messages {
            by_channel.entry(m.channel_key.clone()).or_default().push(m);
        }
        for v in by_channel.values_mut() {
            v.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        }
        Self { by_channel }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigParseError> {
        Ok(Self::from_messages(parse_corpus(text)?))
    }

    pub fn open(path: &Path) -> Result<Self, ConfigParseError> {
        let text = crate::config::read_config(path)?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn len(&self) -> usize {
        self.by_channel.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses a JSON-lines corpus; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<RawMessage>, ConfigParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: RawMessage =
            serde_json::from_str(line).map_err(|e| ConfigParseError::new(Some(i + 1), e.to_string()))?;
        m.validate()
            .map_err(|e| ConfigParseError::new(Some(i + 1), e.to_string()))?;
        out.push(m);
    }
    Ok(out)
}

impl SourceAdapter for FixtureAdapter {
    fn name(&self) -> &str {
        "fixture"
    }

    fn fetch(
        &self,
        channel: &ChannelRef,
        since: Option<Timestamp>,
        until: Timestamp,
    ) -> Result<Vec<RawMessage>, SourceError> {
        Ok(self
            .by_channel
            .get(&channel.channel_key)
            .map(|v| {
                v.iter()
                    .filter(|m| since.is_none_or(|s| s < m.posted_at) && m.posted_at <= until)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default())
    }
}

/// Live adapter for an HTTP bridge in front of the messaging platform.
///
/// `GET {base_url}/channels/{handle}/messages?until=..[&since=..]` with a
/// bearer token, answering a JSON array of `{id, date, text, views, forwards}`.
/// `handle` is the public handle when known, the channel key otherwise.
pub struct HttpBridgeAdapter {
    base_url: String,
    token: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct BridgePost {
    id: u64,
    date: DateTime<Utc>,
    #[serde(default)]
    text: String,
    #[serde(default)]
    views: u64,
    #[serde(default)]
    forwards: u64,
}

impl HttpBridgeAdapter {
    /// Reads the bearer token from environment variable `token_env`.
    pub fn from_env(base_url: &str, token_env: &str) -> Result<Self, String> {
        let token = std::env::var(token_env).map_err(|_| format!("environment variable {token_env} is not set"))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            token,
            client,
        })
    }
}

impl SourceAdapter for HttpBridgeAdapter {
    fn name(&self) -> &str {
        "http-bridge"
    }

    fn rate_limit_hint(&self) -> Option<u32> {
        Some(60)
    }

    fn fetch(
        &self,
        channel: &ChannelRef,
        since: Option<Timestamp>,
        until: Timestamp,
    ) -> Result<Vec<RawMessage>, SourceError> {
        let handle = channel.public_handle.as_deref().unwrap_or(&channel.channel_key);
        let mut query = vec![("until", chanwatch_core::message::iso(&until))];
        if let Some(s) = since {
            query.push(("since", chanwatch_core::message::iso(&s)));
        }
        let resp = self
            .client
            .get(format!("{}/channels/{handle}/messages", self.base_url))
            .bearer_auth(&self.token)
            .query(&query)
            .send()
            .map_err(|e| SourceError::SourceUnreachable(e.without_url().to_string()))?;
        let status = resp.status();
        if status.as_u16() == 404 {
            return Err(SourceError::ChannelNotFound(channel.channel_key.clone()));
        }
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok())
                .map(Duration::from_secs);
            return Err(SourceError::RateLimited { retry_after });
        }
        if !status.is_success() {
            return Err(SourceError::SourceUnreachable(format!("bridge answered {status}")));
        }
        let posts: Vec<BridgePost> = resp
            .json()
            .map_err(|e| SourceError::SourceUnreachable(e.without_url().to_string()))?;
        let fetched_at = Utc::now().trunc_subsecs(0);
        Ok(posts
            .into_iter()
            .map(|p| RawMessage {
                channel_key: channel.channel_key.clone(),
                source_message_id: p.id,
                posted_at: p.date.trunc_subsecs(0),
                text: p.text,
                views: p.views,
                forwards: p.forwards,
                fetched_at: fetched_at.max(p.date.trunc_subsecs(0)),
            })
            .collect())
    }
}
