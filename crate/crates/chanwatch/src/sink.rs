//! Report delivery: chat webhook, report files, standard output.

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use chanwatch_core::chunk::chunk_text;
use chanwatch_core::{LinkStyle, ReportDocument};
use serde::Serialize;

use crate::config::SinkConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryStatus {
    Ok,
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeliveryReceipt {
    pub sink_kind: &'static str,
    pub parts_sent: usize,
    pub parts_total: usize,
    pub status: DeliveryStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl DeliveryReceipt {
    fn ok(sink_kind: &'static str, parts: usize, detail: Option<String>) -> Self {
        Self {
            sink_kind,
            parts_sent: parts,
            parts_total: parts,
            status: DeliveryStatus::Ok,
            detail,
        }
    }

    fn failed(sink_kind: &'static str, parts_total: usize, detail: impl Into<String>) -> Self {
        Self {
            sink_kind,
            parts_sent: 0,
            parts_total,
            status: DeliveryStatus::Failed,
            detail: Some(detail.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SinkError {
    #[error("sink unreachable: {0}")]
    SinkUnreachable(String),
    #[error("write failed: {0}")]
    WriteFailed(String),
}

/// Outcome of one webhook POST.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PostOutcome {
    Status(u16),
    /// Connection failure or timeout.
    Transport(String),
}

/// Transport for webhook posts, replaceable in tests.
pub trait HttpPoster: Send + Sync {
    fn post_json(&self, url: &str, body: &serde_json::Value) -> PostOutcome;
}

pub struct ReqwestPoster {
    client: reqwest::blocking::Client,
}

impl ReqwestPoster {
    pub fn new(timeout: Duration) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("http client builds"),
        }
    }
}

impl Default for ReqwestPoster {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpPoster for ReqwestPoster {
    fn post_json(&self, url: &str, body: &serde_json::Value) -> PostOutcome {
        match self.client.post(url).json(body).send() {
            Ok(r) => PostOutcome::Status(r.status().as_u16()),
            // Never let the URL (a secret) reach logs or receipts.
            Err(e) => PostOutcome::Transport(e.without_url().to_string()),
        }
    }
}

/// Webhook targets must be https; plain http is accepted for loopback hosts
/// so local stubs work.
pub fn check_webhook_url(url: &str) -> Result<(), String> {
    if url.starts_with("https://") {
        return Ok(());
    }
    if let Some(rest) = url.strip_prefix("http://") {
        let host = rest.split(['/', '?']).next().unwrap_or("");
        let host = host.rsplit_once('@').map_or(host, |(_, h)| h);
        let name = if host.starts_with('[') {
            host.split(']').next().map(|h| &h[1..]).unwrap_or("")
        } else {
            host.split(':').next().unwrap_or("")
        };
        if matches!(name, "localhost" | "127.0.0.1" | "::1") {
            return Ok(());
        }
    }
    Err("webhook url must use https".into())
}

/// Posts `doc` in chat style, chunk by chunk, stopping at the first chunk
/// that fails after one retry.
pub fn deliver_webhook(
    doc: &ReportDocument,
    url: &str,
    chunk_limit: usize,
    poster: &dyn HttpPoster,
) -> DeliveryReceipt {
    const KIND: &str = "webhook";
    if let Err(e) = check_webhook_url(url) {
        return DeliveryReceipt::failed(KIND, 0, e);
    }
    let parts = match chunk_text(&doc.render(LinkStyle::Chat), chunk_limit) {
        Ok(p) => p,
        Err(e) => return DeliveryReceipt::failed(KIND, 0, e.to_string()),
    };
    let total = parts.len();
    for (i, part) in parts.iter().enumerate() {
        let body = serde_json::json!({ "text": part });
        let mut outcome = poster.post_json(url, &body);
        let retryable = |o: &PostOutcome| match o {
            PostOutcome::Status(s) => *s >= 500,
            PostOutcome::Transport(_) => true,
        };
        if retryable(&outcome) {
            tracing::warn!(part = i + 1, parts = total, "webhook post failed, retrying once");
            outcome = poster.post_json(url, &body);
        }
        let failure = match &outcome {
            PostOutcome::Status(s) if (200..300).contains(s) => None,
            PostOutcome::Status(s) => Some(format!("part {}/{total}: webhook answered {s}", i + 1)),
            PostOutcome::Transport(e) => Some(format!("part {}/{total}: {e}", i + 1)),
        };
        if let Some(detail) = failure {
            return DeliveryReceipt {
                sink_kind: KIND,
                parts_sent: i,
                parts_total: total,
                status: if i == 0 {
                    DeliveryStatus::Failed
                } else {
                    DeliveryStatus::Partial
                },
                detail: Some(detail),
            };
        }
    }
    DeliveryReceipt::ok(KIND, total, None)
}

/// `report_{topic}_{lang}_{end-date}.txt`, end date taken in UTC.
pub fn report_file_name(topic: &str, doc: &ReportDocument) -> String {
    format!(
        "report_{topic}_{}_{}.txt",
        doc.language.code(),
        doc.analysis_period.end().format("%Y-%m-%d")
    )
}

/// Writes the file-style rendering atomically (temp file, fsync, rename).
pub fn write_report_file(dir: &Path, topic: &str, doc: &ReportDocument) -> Result<std::path::PathBuf, SinkError> {
    let fail = |what: &str, e: std::io::Error| SinkError::WriteFailed(format!("{what} {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(|e| fail("cannot create", e))?;
    let name = report_file_name(topic, doc);
    let target = dir.join(&name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(doc.render(LinkStyle::File).as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, &target)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(fail("cannot write report in", e));
    }
    Ok(target)
}

pub fn deliver_file(doc: &ReportDocument, dir: &Path, topic: &str) -> DeliveryReceipt {
    match write_report_file(dir, topic, doc) {
        Ok(path) => DeliveryReceipt::ok("file", 1, Some(path.display().to_string())),
        Err(e) => DeliveryReceipt::failed("file", 1, e.to_string()),
    }
}

pub fn deliver_stdout(doc: &ReportDocument, out: &mut dyn Write) -> DeliveryReceipt {
    let text = doc.render(LinkStyle::File);
    match out
        .write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
    {
        Ok(()) => DeliveryReceipt::ok("stdout", 1, None),
        Err(e) => DeliveryReceipt::failed("stdout", 1, e.to_string()),
    }
}

/// Everything a sink may need besides its config.
pub struct SinkContext<'a> {
    pub topic: &'a str,
    pub poster: &'a dyn HttpPoster,
    pub stdout: &'a mut dyn Write,
    /// Looks up environment variables; tests pass a closure over a map.
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

pub fn deliver(doc: &ReportDocument, sink: &SinkConfig, ctx: &mut SinkContext<'_>) -> DeliveryReceipt {
    match sink {
        SinkConfig::Webhook {
            url_env,
            chunk_limit_chars,
        } => match (ctx.env)(url_env) {
            Some(url) if !url.is_empty() => deliver_webhook(doc, &url, *chunk_limit_chars, ctx.poster),
            _ => DeliveryReceipt::failed("webhook", 0, format!("environment variable {url_env} is not set")),
        },
        SinkConfig::File { dir } => deliver_file(doc, dir, ctx.topic),
        SinkConfig::Stdout => deliver_stdout(doc, ctx.stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn webhook_url_rules() {
        assert!(check_webhook_url("https://hooks.example.com/T/B/x").is_ok());
        assert!(check_webhook_url("http://127.0.0.1:8080/hook").is_ok());
        assert!(check_webhook_url("http://localhost/hook").is_ok());
        assert!(check_webhook_url("http://[::1]:9/x").is_ok());
        assert!(check_webhook_url("http://example.com/hook").is_err());
        assert!(check_webhook_url("http://localhost.evil.com/hook").is_err());
        assert!(check_webhook_url("ftp://x").is_err());
    }
}
