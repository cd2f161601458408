mod common;

use std::collections::BTreeMap;

use chanwatch::config::RunConfig;
use chanwatch::core::{ChannelRef, Language, RawMessage, Timestamp};
use chanwatch::llm::{MockEntry, MockFailure, MockLlm, MockScript};
use chanwatch::pipeline::RunStatus;
use chanwatch::source::{FixtureAdapter, SourceAdapter, SourceError};
use common::*;

#[test]
fn llm_failure_gives_metrics_only_reports() {
    let setup = MiniSetup::new();
    let llm = MockLlm::failing(MockFailure::Fatal);
    let (outcome, _) = setup.run(&llm).unwrap();
    assert_eq!(outcome.status, RunStatus::Degraded);
    assert_eq!(outcome.status.exit_code(), 2);
    // One fatal summary call; no translation attempt.
    assert_eq!(llm.call_count(), 1);
    for lang in [Language::En, Language::Fi] {
        let doc = outcome.report(lang).unwrap();
        assert_eq!(doc.summary_block, lang.unavailable_notice());
        assert_eq!(doc.metrics.total_messages, 3);
        assert_eq!(doc.metrics.total_views, 600);
        assert!(!doc.warnings.is_empty());
    }
}

#[test]
fn transient_llm_errors_are_retried() {
    let setup = MiniSetup::new();
    let mut config = setup.config.clone();
    config.llm.retry_attempts = 3;
    let setup = MiniSetup { config, ..setup };
    let llm = MockLlm::new(MockScript {
        responses: vec![
            MockEntry {
                system: "summary".into(),
                user: None,
                user_contains: None,
                reply: "According to (1), talks began.".into(),
            },
            MockEntry {
                system: "translation".into(),
                user: None,
                user_contains: None,
                reply: "Lähteen (1) mukaan neuvottelut alkoivat.".into(),
            },
        ],
        fail_calls: BTreeMap::from([(0, MockFailure::Transient)]),
        fail_always: None,
    });
    let (outcome, _) = setup.run(&llm).unwrap();
    assert_eq!(outcome.status, RunStatus::Ok);
    assert_eq!(llm.call_count(), 3);
    assert!(outcome
        .report(Language::Fi)
        .unwrap()
        .summary_block
        .contains("neuvottelut"));
}

/// Fixture source that fails for one channel.
struct PartlyDown {
    inner: FixtureAdapter,
    down: &'static str,
}

impl SourceAdapter for PartlyDown {
    fn name(&self) -> &str {
        "partly-down"
    }

    fn fetch(
        &self,
        channel: &ChannelRef,
        since: Option<Timestamp>,
        until: Timestamp,
    ) -> Result<Vec<RawMessage>, SourceError> {
        if channel.channel_key == self.down {
            return Err(SourceError::SourceUnreachable("connection refused".into()));
        }
        self.inner.fetch(channel, since, until)
    }
}

#[test]
fn failed_channel_degrades_but_reports() {
    let setup = MiniSetup::new();
    let source = PartlyDown {
        inner: FixtureAdapter::from_messages(setup.messages.clone()),
        down: "beta",
    };
    let llm = MockLlm::canned(
        "According to (1), talks began. (2) agreed.",
        "Lähteen (1) mukaan neuvottelut alkoivat. (2) oli samaa mieltä.",
    );
    let (outcome, out) = setup.run_with(&llm, &source).unwrap();
    assert_eq!(outcome.status, RunStatus::Degraded);
    assert_eq!(outcome.filtered_count, 2);
    let ingest = outcome.ingest.as_ref().unwrap();
    assert_eq!(ingest.failed_channels().map(|(k, _)| k).collect::<Vec<_>>(), ["beta"]);
    assert!(out.contains("1 of 3 channels could not be fetched: beta."));
}

#[test]
fn render_reproduces_the_scheduled_run() {
    let ws = DemoWorkspace::new("");
    let (code, _, err) = ws.cli(&["ingest", "--now", DEMO_NOW]);
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = ws.cli(&["render", "--date", "2025-03-10"]);
    assert_eq!(code, 0, "{err}");
    let en = read("fixtures/golden/report_finland_en_2025-03-10.txt");
    let fi = read("fixtures/golden/report_finland_fi_2025-03-10.txt");
    assert!(out.contains(&en) && out.contains(&fi));
    // Render never ingests and never writes report files.
    assert!(!ws.path("reports").exists());
}

#[test]
fn dry_run_prints_without_delivering() {
    let ws = DemoWorkspace::new("");
    let (code, out, _) = ws.cli(&["run", "--now", DEMO_NOW, "--dry-run"]);
    assert_eq!(code, 0);
    assert_eq!(out.matches("Finland-Related Messages Summary").count(), 2);
    assert!(!ws.path("reports").exists());
}

#[test]
fn shipped_configs_validate() {
    for cfg in ["config/chanwatch.demo.toml", "config/chanwatch.toml"] {
        let path = repo_file(cfg);
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = chanwatch::cli::run(
            ["chanwatch", "--config", path.to_str().unwrap(), "validate-config"],
            &mut out,
            &mut err,
        );
        let out = String::from_utf8(out).unwrap();
        assert_eq!(code, 0, "{cfg}: {}", String::from_utf8_lossy(&err));
        assert!(out.starts_with("ok: 170 channels"), "{cfg}: {out}");
    }
}

#[test]
fn reference_channel_list_loads() {
    let config = RunConfig::load(&repo_file("config/chanwatch.demo.toml")).unwrap();
    let channels = config.load_channels().unwrap();
    assert_eq!(channels.len(), 170);
    assert_eq!(channels.iter().filter(|c| c.public_handle.is_none()).count(), 2 + 15);
}

#[test]
fn concurrent_run_is_refused() {
    let ws = DemoWorkspace::new("");
    let config = RunConfig::load(&ws.config_path).unwrap();
    let _held = chanwatch::pipeline::RunLock::acquire(&config.lock_dir, "finland").unwrap();
    let (code, _, err) = ws.cli(&["run", "--now", DEMO_NOW]);
    assert_eq!(code, 1);
    assert!(err.contains("finland"), "{err}");
}
