//! Report rendering.
//!
//! A [`ReportDocument`] holds plain text plus a link layer (report id → URL).
//! [`linkify`] rewrites citations in the summary block into sink-neutral link
//! tokens `<url|(id)>`; each sink then renders tokens in its own style through
//! [`ReportDocument::render`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::citation::{citation_groups, CitationMap, ReportId};
use crate::message::{iso, TimeWindow, Timestamp};
use crate::metrics::EngagementMetrics;
use crate::summary::{Language, SummaryKind, SummaryResult};

pub const RULE: &str = "------------------------------------------------------------";
pub const FOOTER: &str = "Message IDs are clickable links to original posts.";
pub const RATIO_NOTE: &str = "Views/Forwards Ratio averages only posts with at least one forward.";
pub const UNVERIFIED_SUFFIX: &str = " [unverified]";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("metrics cover {metrics_messages} messages but the citation map has {map_entries}")]
pub struct MetricsMismatch {
    pub metrics_messages: u64,
    pub map_entries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportDocument {
    pub language: Language,
    pub topic_label: String,
    pub title: String,
    pub analysis_period: TimeWindow,
    pub generated_at: Timestamp,
    pub summary_block: String,
    pub metrics: EngagementMetrics,
    /// Every id cited in the summary block; `None` when no URL is known.
    pub citation_links: BTreeMap<ReportId, Option<String>>,
    /// Cited ids that resolve to no collected message.
    pub unverified_ids: BTreeSet<ReportId>,
    pub warnings: Vec<String>,
    pub dropped_ids: Vec<ReportId>,
}

/// How link tokens are written out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkStyle {
    /// `<url|(id)>` as stored.
    Token,
    /// Chat markup: tokens kept, `&`, `<` and `>` escaped elsewhere.
    Chat,
    /// `(id)` only.
    Plain,
    /// `(id)` inline plus a trailing `Sources:` list of `(id) <url>` lines.
    File,
}

pub fn title_for(topic_label: &str) -> String {
    alloc::format!("{topic_label}-Related Messages Summary")
}

/// Capitalizes the first character of a topic key, e.g. `finland` → `Finland`.
pub fn default_topic_label(topic: &str) -> String {
    let mut chars = topic.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn render_report(
    summary: &SummaryResult,
    metrics: &EngagementMetrics,
    window: &TimeWindow,
    map: &CitationMap,
    generated_at: Timestamp,
    topic_label: &str,
) -> Result<ReportDocument, MetricsMismatch> {
    if metrics.total_messages != map.len() as u64 {
        return Err(MetricsMismatch {
            metrics_messages: metrics.total_messages,
            map_entries: map.len(),
        });
    }
    let summary_block = match summary.kind {
        SummaryKind::Sentinel => String::from(summary.language.sentinel()),
        SummaryKind::Unavailable | SummaryKind::Generated => String::from(summary.text.trim()),
    };
    let mut citation_links = BTreeMap::new();
    let mut unverified_ids = BTreeSet::new();
    for group in citation_groups(&summary_block) {
        for id in group.ids {
            match map.get(id) {
                Some(t) => {
                    citation_links.insert(id, t.public_url.clone());
                }
                None => {
                    citation_links.insert(id, None);
                    unverified_ids.insert(id);
                }
            }
        }
    }
    let mut warnings = Vec::new();
    if !unverified_ids.is_empty() {
        warnings.push(alloc::format!(
            "Summary cites message IDs that match no collected message: {}. They are marked [unverified].",
            join_ids(unverified_ids.iter().copied())
        ));
    }
    if summary.is_ungrounded() {
        warnings.push(String::from(
            "Summary cites no message IDs; its claims cannot be traced to sources.",
        ));
    }
    Ok(ReportDocument {
        language: summary.language,
        topic_label: topic_label.into(),
        title: title_for(topic_label),
        analysis_period: *window,
        generated_at,
        summary_block,
        metrics: *metrics,
        citation_links,
        unverified_ids,
        warnings,
        dropped_ids: Vec::new(),
    })
}

fn join_ids(ids: impl Iterator<Item = ReportId>) -> String {
    let mut out = String::new();
    for (i, id) in ids.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{id}");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment<'a> {
    Text(&'a str),
    Link { url: &'a str, id: ReportId },
}

/// Length of a link token starting at `s[0] == '<'`, if one starts there.
fn token_at(s: &str) -> Option<(usize, &str, ReportId)> {
    let rest = s.strip_prefix('<')?;
    let bar = rest.find("|(")?;
    let url = &rest[..bar];
    if url.is_empty() || url.contains(|c: char| c.is_whitespace() || matches!(c, '<' | '>' | '|')) {
        return None;
    }
    let after = &rest[bar + 2..];
    let close = after.find(")>")?;
    let digits = &after[..close];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let id = digits.parse().ok()?;
    Some((1 + bar + 2 + close + 2, url, id))
}

fn segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut plain_start = 0;
    let mut i = 0;
    while let Some(off) = text[i..].find('<') {
        let at = i + off;
        if let Some((len, url, id)) = token_at(&text[at..]) {
            if plain_start < at {
                out.push(Segment::Text(&text[plain_start..at]));
            }
            out.push(Segment::Link { url, id });
            i = at + len;
            plain_start = i;
        } else {
            i = at + 1;
        }
    }
    if plain_start < text.len() {
        out.push(Segment::Text(&text[plain_start..]));
    }
    out
}

/// Rewrites citations of plain text; see [`linkify`].
fn linkify_text(
    text: &str,
    links: &BTreeMap<ReportId, Option<String>>,
    unverified: &BTreeSet<ReportId>,
    out: &mut String,
) {
    let mut last = 0;
    for group in citation_groups(text) {
        let tail = &text[group.span.end..];
        let needs_rewrite = group
            .ids
            .iter()
            .any(|id| matches!(links.get(id), Some(Some(_))) || unverified.contains(id));
        let already_flagged =
            group.ids.len() == 1 && unverified.contains(&group.ids[0]) && tail.starts_with(UNVERIFIED_SUFFIX);
        if !needs_rewrite || already_flagged {
            continue;
        }
        out.push_str(&text[last..group.span.start]);
        for (k, id) in group.ids.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            match links.get(id) {
                Some(Some(url)) if !unverified.contains(id) => {
                    let _ = write!(out, "<{url}|({id})>");
                }
                _ if unverified.contains(id) => {
                    let _ = write!(out, "({id}){UNVERIFIED_SUFFIX}");
                }
                _ => {
                    let _ = write!(out, "({id})");
                }
            }
        }
        last = group.span.end;
    }
    out.push_str(&text[last..]);
}

/// Turns each cited id with a known URL into a `<url|(id)>` token and
/// suffixes unknown ids with ` [unverified]`. Ids without a URL stay plain.
/// Idempotent.
pub fn linkify(doc: &ReportDocument) -> ReportDocument {
    let mut block = String::with_capacity(doc.summary_block.len());
    for seg in segments(&doc.summary_block) {
        match seg {
            Segment::Link { url, id } => {
                let _ = write!(block, "<{url}|({id})>");
            }
            Segment::Text(t) => linkify_text(t, &doc.citation_links, &doc.unverified_ids, &mut block),
        }
    }
    ReportDocument {
        summary_block: block,
        ..doc.clone()
    }
}

fn escape_chat(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}

/// Number of link tokens in `text`.
pub fn count_link_tokens(text: &str) -> usize {
    segments(text)
        .iter()
        .filter(|s| matches!(s, Segment::Link { .. }))
        .count()
}

/// Ids carried by link tokens in `text`, in order of appearance.
pub fn linked_ids(text: &str) -> Vec<(ReportId, String)> {
    segments(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Link { url, id } => Some((id, url.into())),
            Segment::Text(_) => None,
        })
        .collect()
}

fn real(v: f64) -> String {
    alloc::format!("{v:.2}")
}

impl ReportDocument {
    /// Appends a warning shown in the report header.
    pub fn push_warning(&mut self, warning: impl Into<String>) {
        self.warnings.push(warning.into());
    }

    pub fn with_dropped(mut self, dropped: Vec<ReportId>) -> Self {
        self.dropped_ids = dropped;
        self
    }

    fn summary_in(&self, style: LinkStyle) -> String {
        let mut out = String::with_capacity(self.summary_block.len());
        for seg in segments(&self.summary_block) {
            match (seg, style) {
                (Segment::Link { url, id }, LinkStyle::Token | LinkStyle::Chat) => {
                    let _ = write!(out, "<{url}|({id})>");
                }
                (Segment::Link { id, .. }, LinkStyle::Plain | LinkStyle::File) => {
                    let _ = write!(out, "({id})");
                }
                (Segment::Text(t), LinkStyle::Chat) => escape_chat(t, &mut out),
                (Segment::Text(t), _) => out.push_str(t),
            }
        }
        out
    }

    /// Full report text in the given link style.
    pub fn render(&self, style: LinkStyle) -> String {
        let m = &self.metrics;
        let w = &self.analysis_period;
        let label = &self.topic_label;
        let mut s = String::new();
        let text = |s: &mut String, t: &str| {
            if style == LinkStyle::Chat {
                escape_chat(t, s)
            } else {
                s.push_str(t)
            }
        };

        text(&mut s, &self.title);
        s.push_str("\n\n");
        let _ = writeln!(s, "Analysis Period: {} – {}", iso(&w.start()), iso(&w.end()));
        let _ = writeln!(s, "Generated: {}", iso(&self.generated_at));
        if !self.warnings.is_empty() {
            s.push_str("\nWarnings:\n");
            for warning in &self.warnings {
                s.push_str("- ");
                text(&mut s, warning);
                s.push('\n');
            }
        }
        s.push('\n');
        text(
            &mut s,
            &alloc::format!("Analysis of Messages about {label} and Generated Summary:"),
        );
        s.push('\n');
        s.push_str(RULE);
        s.push('\n');
        s.push_str(&self.summary_in(style));
        s.push('\n');
        s.push_str(RULE);
        s.push_str("\n\n");

        s.push_str("Basic Metrics:\n");
        text(
            &mut s,
            &alloc::format!("- Total Messages Analyzed (related to {label}): {}\n", m.total_messages),
        );
        let _ = writeln!(s, "- Total Views: {}", m.total_views);
        let _ = writeln!(s, "- Total Forwards: {}", m.total_forwards);
        s.push('\n');
        s.push_str("Average Metrics:\n");
        let _ = writeln!(s, "- Avg Views/Post: {} (average views per post)", real(m.avg_views));
        let _ = writeln!(
            s,
            "- Avg Forwards/Post: {} (average forwards per post)",
            real(m.avg_forwards)
        );
        let _ = writeln!(s, "- Base Engagement: {}% (share rate)", real(m.engagement_rate));
        s.push('\n');
        s.push_str("Advanced Engagement:\n");
        let _ = writeln!(s, "- Views/Forwards Ratio: {}", real(m.views_to_forwards_ratio_avg));
        let _ = writeln!(s, "- Virality Score: {}%", real(m.virality_score));
        let _ = writeln!(s, "- Unique Channels: {}", m.unique_channels);
        s.push('\n');
        s.push_str("Distribution Patterns:\n");
        let _ = writeln!(s, "- Posts/Day: {}", real(m.posts_per_day));
        let _ = writeln!(s, "- Peak Daily Posts: {}", m.max_daily_posts);
        let _ = writeln!(s, "- Channel Activity Ratio: {}", real(m.channel_activity_ratio));
        s.push('\n');
        s.push_str(FOOTER);
        s.push('\n');
        s.push_str(RATIO_NOTE);
        s.push('\n');
        if !self.dropped_ids.is_empty() {
            let _ = writeln!(
                s,
                "Messages left out of the summary to fit the model context: {}",
                join_ids(self.dropped_ids.iter().copied())
            );
        }
        if style == LinkStyle::File {
            s.push_str(&self.link_appendix());
        }
        s
    }

    /// `Sources:` list of `(id) <url>` lines for ids linked in the summary.
    pub fn link_appendix(&self) -> String {
        let linked: BTreeMap<ReportId, String> = linked_ids(&self.summary_block).into_iter().collect();
        if linked.is_empty() {
            return String::new();
        }
        let mut s = String::from("\nSources:\n");
        for (id, url) in linked {
            let _ = writeln!(s, "({id}) <{url}>");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::{assign_report_ids, validate_citations, CitationCheck};
    use crate::filter::{FilteredBatch, LanguageTag, PatternSet, PatternSpec};
    use crate::message::{ChannelList, ChannelRef, RawMessage};
    use crate::metrics::compute_metrics;
    use alloc::vec;
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn start() -> Timestamp {
        Utc.with_ymd_and_hms(2025, 3, 9, 6, 0, 0).unwrap()
    }

    fn window() -> TimeWindow {
        TimeWindow::new(start(), start() + Duration::hours(24)).unwrap()
    }

    fn fixture() -> (FilteredBatch, CitationMap) {
        let filter = PatternSet::new(
            "finland",
            vec![PatternSpec {
                topic: "finland".into(),
                language: LanguageTag::En,
                pattern: "finland".into(),
                case_insensitive: true,
            }],
            "t",
        )
        .unwrap()
        .compile()
        .unwrap();
        let rows = [("a", 11, 100, 10), ("b", 12, 200, 0), ("a", 13, 300, 20)];
        let msgs = rows
            .iter()
            .enumerate()
            .map(|(i, (ch, id, v, f))| {
                let t = start() + Duration::hours(i as i64 + 1);
                RawMessage {
                    channel_key: (*ch).into(),
                    source_message_id: *id,
                    posted_at: t,
                    text: "Finland news".into(),
                    views: *v,
                    forwards: *f,
                    fetched_at: t,
                }
            })
            .collect();
        let batch = FilteredBatch::from_matched(&filter, msgs, window()).unwrap();
        let chans = ChannelList::new(vec![
            ChannelRef::new("a", "Alpha").with_handle("alpha"),
            ChannelRef::new("b", "Beta"),
        ])
        .unwrap();
        let map = assign_report_ids(&batch, &chans).unwrap();
        (batch, map)
    }

    fn doc_for(text: &str) -> ReportDocument {
        let (batch, map) = fixture();
        let summary = SummaryResult::from_model(text.into(), Language::En, &map, &[1, 2, 3]);
        let metrics = compute_metrics(&batch, 0.01);
        render_report(
            &summary,
            &metrics,
            &window(),
            &map,
            start() + Duration::hours(24),
            "Finland",
        )
        .unwrap()
    }

    #[test]
    fn links_known_urls() {
        let d = linkify(&doc_for("Border closed (1). Talks (2). Again (3)."));
        assert_eq!(
            d.summary_block,
            "Border closed <https://t.me/alpha/11|(1)>. Talks (2). Again <https://t.me/alpha/13|(3)>."
        );
        assert!(d.warnings.is_empty());
        assert_eq!(count_link_tokens(&d.summary_block), 2);
    }

    #[test]
    fn unknown_ids_flagged() {
        let d = linkify(&doc_for("A (1). B (9)."));
        assert_eq!(d.summary_block, "A <https://t.me/alpha/11|(1)>. B (9) [unverified].");
        assert_eq!(d.warnings.len(), 1);
        assert!(d.warnings[0].contains('9'));
        let text = d.render(LinkStyle::Plain);
        assert!(text.contains("\nWarnings:\n- Summary cites"));
    }

    #[test]
    fn grouped_citations_split() {
        let d = linkify(&doc_for("Several channels (1, 2, 9) claimed."));
        assert_eq!(
            d.summary_block,
            "Several channels <https://t.me/alpha/11|(1)>, (2), (9) [unverified] claimed."
        );
        let d = linkify(&doc_for("Only unlinked (2, 2)."));
        assert_eq!(d.summary_block, "Only unlinked (2, 2).");
    }

    #[test]
    fn linkify_idempotent() {
        for text in ["A (1). B (9). C (1, 3) (2)", "(see above) (3)", "x <not a token> (1)"] {
            let once = linkify(&doc_for(text));
            assert_eq!(linkify(&once), once);
        }
    }

    #[test]
    fn metrics_mismatch() {
        let (batch, map) = fixture();
        let mut metrics = compute_metrics(&batch, 0.01);
        metrics.total_messages = 2;
        let s = SummaryResult::sentinel(Language::En);
        assert!(render_report(&s, &metrics, &window(), &map, start(), "Finland").is_err());
    }

    #[test]
    fn sentinel_with_empty_metrics() {
        let s = SummaryResult::sentinel(Language::Fi);
        let d = render_report(
            &s,
            &EngagementMetrics::default(),
            &window(),
            &CitationMap::default(),
            start(),
            "Finland",
        )
        .unwrap();
        assert_eq!(d.summary_block, crate::prompt::SENTINEL_FI);
        let text = d.render(LinkStyle::Plain);
        assert!(text.contains(&alloc::format!("{RULE}\n{}\n{RULE}", crate::prompt::SENTINEL_FI)));
        assert!(text.contains("- Avg Views/Post: 0.00 (average views per post)"));
        assert!(text.contains("- Total Views: 0\n"));
        assert!(!text.contains("Warnings:"));
    }

    #[test]
    fn real_formatting() {
        assert_eq!(real(12.5), "12.50");
        assert_eq!(real(200.0 / 3.0), "66.67");
        assert_eq!(real(0.0), "0.00");
    }

    #[test]
    fn render_styles() {
        let d = linkify(&doc_for("Claims & counterclaims (1) <b>"));
        let chat = d.render(LinkStyle::Chat);
        assert!(chat.contains("Claims &amp; counterclaims <https://t.me/alpha/11|(1)> &lt;b&gt;"));
        let plain = d.render(LinkStyle::Plain);
        assert!(plain.contains("Claims & counterclaims (1) <b>"));
        let file = d.render(LinkStyle::File);
        assert_eq!(file, alloc::format!("{plain}\nSources:\n(1) <https://t.me/alpha/11>\n"));
        assert_eq!(
            d.render(LinkStyle::Token)
                .matches("<https://t.me/alpha/11|(1)>")
                .count(),
            1
        );
    }

    #[test]
    fn ungrounded_warning() {
        let d = doc_for("A summary with no citations.");
        assert_eq!(d.warnings.len(), 1);
        assert!(d.warnings[0].contains("no message IDs"));
    }

    #[test]
    fn topic_label_default() {
        assert_eq!(default_topic_label("finland"), "Finland");
        assert_eq!(title_for("Finland"), "Finland-Related Messages Summary");
    }

    proptest! {
        #[test]
        fn link_totality(ids in proptest::collection::vec(1u32..6, 0..10)) {
            let text: String = ids.iter().map(|i| alloc::format!("claim ({i}). ")).collect();
            let d = linkify(&doc_for(&text));
            // ids 1 and 3 have URLs in the fixture
            let expected = ids.iter().filter(|i| **i == 1 || **i == 3).count();
            prop_assert_eq!(count_link_tokens(&d.summary_block), expected);
            prop_assert_eq!(linkify(&d), d.clone());
            let (_, map) = fixture();
            let check = validate_citations(&crate::citation::extract_citations(&text), &map, &[1, 2, 3]);
            let flagged = d.summary_block.matches(UNVERIFIED_SUFFIX).count();
            let unknown_occurrences = ids.iter().filter(|i| **i > 3).count();
            prop_assert_eq!(flagged, unknown_occurrences);
            prop_assert_eq!(check.unknown_ids.is_empty(), unknown_occurrences == 0);
            let _ = CitationCheck::default();
        }
    }
}
