//! Language-model clients and the summarize / translate steps.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chanwatch_core::prompt::{translation_prompts, SYSTEM_PROMPT, TRANSLATION_SYSTEM_PROMPT};
use chanwatch_core::{
    check_translation_citations, extract_citations, validate_citations, CitationMap, Language, PromptBundle,
    SummaryKind, SummaryResult, TranslationCitationDrift,
};
use serde::Deserialize;

use crate::config::{ConfigParseError, LlmConfig};
use crate::source::RetryPolicy;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient model error: {0}")]
    Transient(String),
    #[error("model error: {0}")]
    Fatal(String),
}

pub trait LlmClient: Send + Sync {
    fn model_name(&self) -> &str;

    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError>;
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SummarizeError {
    #[error("language model unavailable: {0}")]
    LlmUnavailable(LlmError),
    #[error("no message fits the context budget")]
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("language model unavailable: {0}")]
    LlmUnavailable(LlmError),
    #[error(transparent)]
    Drift(#[from] TranslationCitationDrift),
}

fn complete_with_retry(
    client: &dyn LlmClient,
    system: &str,
    user: &str,
    policy: &RetryPolicy,
) -> Result<String, LlmError> {
    policy.run(
        "llm completion",
        || client.complete(system, user),
        |e: &LlmError| matches!(e, LlmError::Transient(_)).then_some(None),
    )
}

/// Sends the bundle and returns the completion verbatim, retrying transient
/// failures.
pub fn summarize(
    client: &dyn LlmClient,
    bundle: &PromptBundle,
    policy: &RetryPolicy,
) -> Result<String, SummarizeError> {
    if bundle.included_ids.is_empty() {
        return Err(SummarizeError::BudgetExhausted);
    }
    complete_with_retry(client, &bundle.system_prompt, &bundle.user_prompt, policy)
        .map_err(SummarizeError::LlmUnavailable)
}

/// Finnish version of an English summary. Sentinel and unavailable summaries
/// map to their fixed Finnish forms without a model call.
pub fn translate(
    client: &dyn LlmClient,
    summary: &SummaryResult,
    map: &CitationMap,
    included: &[chanwatch_core::ReportId],
    policy: &RetryPolicy,
) -> Result<SummaryResult, TranslateError> {
    match summary.kind {
        SummaryKind::Sentinel => return Ok(SummaryResult::sentinel(Language::Fi)),
        SummaryKind::Unavailable => return Ok(SummaryResult::unavailable(Language::Fi)),
        SummaryKind::Generated => {}
    }
    let (system, user) = translation_prompts(&summary.text);
    let text = complete_with_retry(client, &system, &user, policy).map_err(TranslateError::LlmUnavailable)?;
    check_translation_citations(&summary.text, &text)?;
    let cited_ids = extract_citations(&text);
    let validation = validate_citations(&cited_ids, map, included);
    Ok(SummaryResult {
        text,
        language: Language::Fi,
        kind: SummaryKind::Generated,
        cited_ids,
        validation,
    })
}

/// One scripted reply of [`MockLlm`].
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    /// Exact system prompt, or the aliases `summary` / `translation` for the
    /// built-in prompts.
    pub system: String,
    /// Exact user prompt; any when absent.
    #[serde(default)]
    pub user: Option<String>,
    /// Substring the user prompt must contain; any when absent.
    #[serde(default)]
    pub user_contains: Option<String>,
    pub reply: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockFailure {
    Transient,
    Fatal,
}

/// Table of replies plus injected failures, as read from a JSON script:
///
/// ```json
/// {"responses": [{"system": "summary", "reply": "..."}],
///  "fail_calls": {"0": "transient"},
///  "fail_always": null}
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub responses: Vec<MockEntry>,
    /// 0-based call index → failure returned instead of a reply.
    #[serde(default)]
    pub fail_calls: std::collections::BTreeMap<usize, MockFailure>,
    #[serde(default)]
    pub fail_always: Option<MockFailure>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ConfigParseError> {
        let text = crate::config::read_config(path)?;
        serde_json::from_str(&text).map_err(|e| ConfigParseError::new(Some(e.line()), e.to_string()).in_file(path))
    }
}

/// Deterministic table-driven client. The first entry whose system and user
/// constraints match answers; unmatched prompts are a fatal error.
#[derive(Debug, Default)]
pub struct MockLlm {
    script: MockScript,
    calls: AtomicUsize,
    log: Mutex<Vec<(String, String)>>,
}

impl MockLlm {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ..Self::default()
        }
    }

    /// Always answers `summary_reply` to the summary prompt and
    /// `translation_reply` to the translation prompt.
    pub fn canned(summary_reply: &str, translation_reply: &str) -> Self {
        Self::new(MockScript {
            responses: vec![
                MockEntry {
                    system: "summary".into(),
                    user: None,
                    user_contains: None,
                    reply: summary_reply.into(),
                },
                MockEntry {
                    system: "translation".into(),
                    user: None,
                    user_contains: None,
                    reply: translation_reply.into(),
                },
            ],
            ..MockScript::default()
        })
    }

    pub fn failing(kind: MockFailure) -> Self {
        Self::new(MockScript {
            fail_always: Some(kind),
            ..MockScript::default()
        })
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every `(system, user)` pair received, in call order.
    pub fn calls(&self) -> Vec<(String, String)> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn fail(kind: &MockFailure, n: usize) -> LlmError {
        match kind {
            MockFailure::Transient => LlmError::Transient(format!("injected failure on call {n}")),
            MockFailure::Fatal => LlmError::Fatal(format!("injected failure on call {n}")),
        }
    }
}

impl LlmClient for MockLlm {
    fn model_name(&self) -> &str {
        "mock"
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push((system.into(), user.into()));
        if let Some(kind) = self.script.fail_always.as_ref().or(self.script.fail_calls.get(&n)) {
            return Err(Self::fail(kind, n));
        }
        self.script
            .responses
            .iter()
            .find(|e| {
                let sys = match e.system.as_str() {
                    "summary" => SYSTEM_PROMPT,
                    "translation" => TRANSLATION_SYSTEM_PROMPT,
                    s => s,
                };
                sys == system
                    && e.user.as_deref().is_none_or(|u| u == user)
                    && e.user_contains.as_deref().is_none_or(|u| user.contains(u))
            })
            .map(|e| e.reply.clone())
            .ok_or_else(|| LlmError::Fatal(format!("mock has no reply for call {n}")))
    }
}

/// OpenAI-compatible chat completions client.
pub struct OpenAiClient {
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl OpenAiClient {
    /// Reads the API key from the environment variable named in the config.
    pub fn from_config(cfg: &LlmConfig) -> Result<Self, String> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| format!("environment variable {} is not set", cfg.api_key_env))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl LlmClient for OpenAiClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Transient(e.without_url().to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transient(format!("provider answered {status}")));
        }
        if !status.is_success() {
            return Err(LlmError::Fatal(format!("provider answered {status}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| LlmError::Fatal(format!("unreadable completion: {}", e.without_url())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Fatal("completion has no content".into()))
    }
}
