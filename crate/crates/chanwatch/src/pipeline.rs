//! One pipeline run: ingest, filter, metrics, summary, reports, delivery.

use std::fs::{File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chanwatch_core::metrics::compute_metrics;
use chanwatch_core::prompt::{build_prompts, serialize_messages};
use chanwatch_core::report::MetricsMismatch;
use chanwatch_core::{
    assign_report_ids, linkify, render_report, CitationMap, FilteredBatch, Language, LinkStyle, ReportDocument,
    ReportId, SummaryResult, TimeWindow, Timestamp,
};
use serde::Serialize;

use crate::config::{
    ConfigParseError, LlmProvider, PatternConfigError, RunConfig, SinkConfig, SourceKind, StoreConfig,
};
use crate::llm::{summarize, translate, LlmClient, MockLlm, MockScript, OpenAiClient, SummarizeError, TranslateError};
use crate::sink::{deliver, DeliveryReceipt, DeliveryStatus, HttpPoster, SinkContext};
use crate::source::{
    sync_all, FixtureAdapter, HttpBridgeAdapter, IngestOptions, IngestSummary, RetryPolicy, SourceAdapter,
};
use crate::store::{FileStore, MemoryStore, MessageStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigParseError),
    #[error(transparent)]
    Patterns(#[from] PatternConfigError),
    #[error(transparent)]
    Storage(#[from] StoreError),
    #[error("another run for topic '{0}' holds the run lock")]
    Locked(String),
    #[error("cannot take run lock {path}: {reason}")]
    LockFailed { path: String, reason: String },
    #[error("invalid run request: {0}")]
    Request(String),
    #[error(transparent)]
    Internal(#[from] MetricsMismatch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Degraded,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Failed => 1,
            RunStatus::Degraded => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportOutput {
    pub language: Language,
    #[serde(skip)]
    pub document: ReportDocument,
    pub receipts: Vec<DeliveryReceipt>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub window: TimeWindow,
    pub ingest: Option<IngestSummary>,
    pub filtered_count: usize,
    pub reports: Vec<ReportOutput>,
    pub warnings: Vec<String>,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn report(&self, language: Language) -> Option<&ReportDocument> {
        self.reports
            .iter()
            .find(|r| r.language == language)
            .map(|r| &r.document)
    }
}

/// Per-invocation knobs layered over the config.
#[derive(Clone, Debug)]
pub struct RunRequest {
    /// Window end; the window is `[now - window_hours, now)`.
    pub now: Timestamp,
    pub window_hours: Option<u32>,
    pub topic: Option<String>,
    /// Skip delivery; print both reports to stdout instead.
    pub dry_run: bool,
    pub sinks: Option<Vec<SinkConfig>>,
    pub ingest: bool,
}

impl RunRequest {
    pub fn at(now: Timestamp) -> Self {
        Self {
            now,
            window_hours: None,
            topic: None,
            dry_run: false,
            sinks: None,
            ingest: true,
        }
    }
}

/// External collaborators of a run.
pub struct Services<'a> {
    pub store: &'a dyn MessageStore,
    pub source: &'a dyn SourceAdapter,
    pub llm: &'a dyn LlmClient,
    pub poster: &'a dyn HttpPoster,
    pub stdout: &'a mut dyn Write,
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

/// Exclusive per-topic run lock, released on drop.
pub struct RunLock {
    _file: File,
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path, topic: &str) -> Result<Self, RunError> {
        let path = dir.join(format!("chanwatch-{topic}.lock"));
        let failed = |e: std::io::Error| RunError::LockFailed {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(failed)?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(failed)?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file, path }),
            Err(TryLockError::WouldBlock) => Err(RunError::Locked(topic.into())),
            Err(TryLockError::Error(e)) => Err(failed(e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn ingest_options(config: &RunConfig) -> IngestOptions {
    IngestOptions {
        concurrency: config.source.concurrency,
        retry: RetryPolicy {
            attempts: config.source.retry_attempts,
            base: Duration::from_millis(config.source.retry_base_ms),
        },
    }
}

/// Ingest only, under the run lock.
pub fn run_ingest(
    config: &RunConfig,
    store: &dyn MessageStore,
    source: &dyn SourceAdapter,
    until: Timestamp,
) -> Result<IngestSummary, RunError> {
    let _lock = RunLock::acquire(&config.lock_dir, &config.topic)?;
    let channels = config.load_channels()?;
    Ok(sync_all(source, &channels, until, store, &ingest_options(config))?)
}

struct Degradation {
    run: Vec<String>,
    degraded: bool,
}

impl Degradation {
    fn warn(&mut self, w: String) {
        tracing::warn!(warning = %w, "run degraded");
        self.run.push(w);
        self.degraded = true;
    }
}

pub fn run_pipeline(
    config: &RunConfig,
    services: &mut Services<'_>,
    request: &RunRequest,
) -> Result<RunOutcome, RunError> {
    let topic = request.topic.clone().unwrap_or_else(|| config.topic.clone());
    let label = if topic == config.topic {
        config.topic_label.clone()
    } else {
        chanwatch_core::report::default_topic_label(&topic)
    };
    let hours = request.window_hours.unwrap_or(config.window_hours);
    let window = TimeWindow::ending_at(request.now, hours).map_err(|e| RunError::Request(e.to_string()))?;
    let _lock = RunLock::acquire(&config.lock_dir, &topic)?;

    // Re-read journalist-edited files every run; a broken file fails loudly.
    let channels = config.load_channels()?;
    let patterns = config
        .load_patterns()?
        .into_iter()
        .find(|s| s.topic() == topic)
        .ok_or_else(|| {
            ConfigParseError::new(None, format!("no patterns for topic '{topic}'")).in_file(&config.pattern_config_path)
        })?;
    let filter = patterns.compile().map_err(PatternConfigError::from)?;
    let mut notes = Degradation {
        run: Vec::new(),
        degraded: false,
    };
    let mut report_warnings: Vec<String> = Vec::new();

    let ingest = if request.ingest {
        let summary = sync_all(
            services.source,
            &channels,
            request.now,
            services.store,
            &ingest_options(config),
        )?;
        let failed: Vec<&str> = summary.failed_channels().map(|(k, _)| k).collect();
        if !failed.is_empty() {
            let w = format!(
                "{} of {} channels could not be fetched: {}.",
                failed.len(),
                channels.len(),
                failed.join(", ")
            );
            notes.warn(w.clone());
            report_warnings.push(w);
        }
        tracing::info!(
            fetched = summary.total_fetched(),
            stored = summary.total_stored(),
            "ingest finished"
        );
        Some(summary)
    } else {
        None
    };

    let keys = channels.keys();
    let mut batch = FilteredBatch::empty(topic.clone(), window);
    services
        .store
        .scan_window(&keys, &window, &mut |m| batch.extend(&filter, std::iter::once(m)))?;
    let metrics = compute_metrics(&batch, config.virality_threshold);
    tracing::info!(topic = %topic, matched = batch.len(), "window filtered");

    let retry = RetryPolicy {
        attempts: config.llm.retry_attempts,
        base: Duration::from_millis(config.llm.retry_base_ms),
    };
    let mut fi_warnings: Vec<String> = Vec::new();
    let (map, en, fi, dropped) = if batch.is_empty() {
        (
            CitationMap::default(),
            SummaryResult::sentinel(Language::En),
            SummaryResult::sentinel(Language::Fi),
            Vec::new(),
        )
    } else {
        let map = assign_report_ids(&batch, &channels).expect("batch is non-empty");
        let bundle = build_prompts(serialize_messages(&batch, &map, config.llm.budget_chars));
        let en = match summarize(services.llm, &bundle, &retry) {
            Ok(text) => SummaryResult::from_model(text, Language::En, &map, &bundle.included_ids),
            Err(SummarizeError::BudgetExhausted) => {
                let w = format!(
                    "No message fits the model context budget of {} characters; this report carries metrics only.",
                    config.llm.budget_chars
                );
                notes.warn(w.clone());
                report_warnings.push(w);
                SummaryResult::unavailable(Language::En)
            }
            Err(SummarizeError::LlmUnavailable(e)) => {
                let w = format!("The language model was unavailable ({e}); this report carries metrics only.");
                notes.warn(w.clone());
                report_warnings.push(w);
                SummaryResult::unavailable(Language::En)
            }
        };
        let fi = match translate(services.llm, &en, &map, &bundle.included_ids, &retry) {
            Ok(fi) => fi,
            Err(e) => {
                let w = match e {
                    TranslateError::Drift(_) => {
                        "The Finnish translation changed the cited message IDs; the English summary is shown instead."
                            .to_string()
                    }
                    TranslateError::LlmUnavailable(e) => {
                        format!("The Finnish translation failed ({e}); the English summary is shown instead.")
                    }
                };
                notes.warn(w.clone());
                fi_warnings.push(w);
                SummaryResult {
                    language: Language::Fi,
                    ..en.clone()
                }
            }
        };
        (map, en, fi, bundle.dropped_ids)
    };

    let mut reports = Vec::with_capacity(2);
    for (summary, extra) in [(&en, &[][..]), (&fi, &fi_warnings[..])] {
        let doc = build_document(
            summary,
            &metrics,
            &window,
            &map,
            request.now,
            &label,
            report_warnings.iter().chain(extra),
            &dropped,
        )?;
        reports.push(ReportOutput {
            language: summary.language,
            document: doc,
            receipts: Vec::new(),
        });
    }

    if request.dry_run {
        for r in &reports {
            let _ = writeln!(services.stdout, "{}", r.document.render(LinkStyle::File));
        }
    } else {
        let sinks = request.sinks.as_deref().unwrap_or(&config.sinks);
        let mut ctx = SinkContext {
            topic: &topic,
            poster: services.poster,
            stdout: &mut *services.stdout,
            env: services.env,
        };
        for r in &mut reports {
            for sink in sinks {
                let receipt = deliver(&r.document, sink, &mut ctx);
                tracing::info!(
                    sink = receipt.sink_kind,
                    language = %r.language,
                    parts_sent = receipt.parts_sent,
                    parts_total = receipt.parts_total,
                    status = ?receipt.status,
                    "report delivered"
                );
                if receipt.status != DeliveryStatus::Ok {
                    notes.warn(format!(
                        "{} delivery of the {} report was {}: {}",
                        receipt.sink_kind,
                        r.language,
                        if receipt.status == DeliveryStatus::Partial {
                            "partial"
                        } else {
                            "failed"
                        },
                        receipt.detail.as_deref().unwrap_or("no detail")
                    ));
                }
                r.receipts.push(receipt);
            }
        }
    }

    Ok(RunOutcome {
        window,
        ingest,
        filtered_count: batch.len(),
        reports,
        warnings: notes.run,
        status: if notes.degraded {
            RunStatus::Degraded
        } else {
            RunStatus::Ok
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn build_document<'w>(
    summary: &SummaryResult,
    metrics: &chanwatch_core::EngagementMetrics,
    window: &TimeWindow,
    map: &CitationMap,
    now: Timestamp,
    label: &str,
    warnings: impl Iterator<Item = &'w String>,
    dropped: &[ReportId],
) -> Result<ReportDocument, MetricsMismatch> {
    let mut doc = render_report(summary, metrics, window, map, now, label)?;
    let generated = std::mem::take(&mut doc.warnings);
    doc.warnings = warnings.cloned().chain(generated).collect();
    Ok(linkify(&doc.with_dropped(dropped.to_vec())))
}

/// Owned collaborators built from a config.
pub struct Backends {
    pub store: Box<dyn MessageStore>,
    pub source: Box<dyn SourceAdapter>,
    pub llm: Box<dyn LlmClient>,
}

pub fn open_store(config: &RunConfig) -> Result<Box<dyn MessageStore>, StoreError> {
    Ok(match &config.store {
        StoreConfig::File { path } => Box::new(FileStore::open(path)?),
        StoreConfig::Memory => Box::new(MemoryStore::new()),
    })
}

pub fn open_source(config: &RunConfig) -> Result<Box<dyn SourceAdapter>, RunError> {
    Ok(match &config.source.kind {
        SourceKind::Fixture { corpus } => Box::new(FixtureAdapter::open(corpus)?),
        SourceKind::Http { base_url, token_env } => {
            Box::new(HttpBridgeAdapter::from_env(base_url, token_env).map_err(RunError::Request)?)
        }
    })
}

pub fn open_llm(config: &RunConfig) -> Result<Box<dyn LlmClient>, RunError> {
    Ok(match config.llm.provider {
        LlmProvider::Mock => {
            let path = config.llm.mock_script.as_deref().expect("validated at parse");
            Box::new(MockLlm::new(MockScript::load(path)?))
        }
        LlmProvider::Openai => Box::new(OpenAiClient::from_config(&config.llm).map_err(RunError::Request)?),
    })
}

pub fn open_backends(config: &RunConfig) -> Result<Backends, RunError> {
    Ok(Backends {
        store: open_store(config)?,
        source: open_source(config)?,
        llm: open_llm(config)?,
    })
}
