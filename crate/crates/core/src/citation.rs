//! Report-local citation ids and their grounding.
//!
//! Prompts never carry platform message ids. Each message of a filtered batch
//! gets a dense id `1..=N` in batch order, and every citation the model writes
//! is resolved back through the [`CitationMap`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::filter::FilteredBatch;
use crate::message::{ChannelList, MessageKey};

pub type ReportId = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CitationTarget {
    pub channel_key: String,
    pub source_message_id: u64,
    pub display_name: String,
    pub public_url: Option<String>,
}

impl CitationTarget {
    pub fn key(&self) -> MessageKey {
        MessageKey {
            channel_key: self.channel_key.clone(),
            source_message_id: self.source_message_id,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CitationMap {
    entries: BTreeMap<ReportId, CitationTarget>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("cannot assign report ids to an empty batch")]
pub struct EmptyBatch;

/// Numbers the batch `1..=N` in batch order. Channels missing from `channels`
/// fall back to their key as display name and get no URL.
pub fn assign_report_ids(batch: &FilteredBatch, channels: &ChannelList) -> Result<CitationMap, EmptyBatch> {
    if batch.is_empty() {
        return Err(EmptyBatch);
    }
    let entries = batch
        .messages()
        .iter()
        .zip(1..)
        .map(|(m, id)| {
            let ch = channels.get(&m.channel_key);
            let target = CitationTarget {
                channel_key: m.channel_key.clone(),
                source_message_id: m.source_message_id,
                display_name: ch
                    .map(|c| c.display_name.clone())
                    .unwrap_or_else(|| m.channel_key.clone()),
                public_url: ch.and_then(|c| c.post_url(m.source_message_id)),
            };
            (id, target)
        })
        .collect();
    Ok(CitationMap { entries })
}

impl CitationMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ReportId) -> Option<&CitationTarget> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: ReportId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ReportId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReportId, &CitationTarget)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// `true` when this map was produced from exactly `batch`, in order.
    pub fn matches_batch(&self, batch: &FilteredBatch) -> bool {
        self.len() == batch.len()
            && self
                .entries
                .values()
                .zip(batch.messages())
                .all(|(t, m)| t.channel_key == m.channel_key && t.source_message_id == m.source_message_id)
    }

    /// id → url for every id, including those without a public URL.
    pub fn link_table(&self) -> BTreeMap<ReportId, Option<String>> {
        self.entries.iter().map(|(k, v)| (*k, v.public_url.clone())).collect()
    }
}

/// A parenthesized group of report ids found in text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CitationGroup {
    /// Byte range of the group including both parentheses.
    pub span: Range<usize>,
    pub ids: Vec<ReportId>,
}

/// Parses the inside of one parenthesized group: positive integers separated
/// by commas and/or whitespace. Anything else disqualifies the group.
fn parse_group(inner: &str) -> Option<Vec<ReportId>> {
    let mut ids = Vec::new();
    for tok in inner.split(|c: char| c == ',' || c.is_whitespace()) {
        if tok.is_empty() {
            continue;
        }
        if !tok.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        match tok.parse::<ReportId>() {
            Ok(n) if n > 0 => ids.push(n),
            _ => return None,
        }
    }
    (!ids.is_empty()).then_some(ids)
}

/// All citation groups in `text`, left to right. Only innermost parentheses
/// are considered.
pub fn citation_groups(text: &str) -> Vec<CitationGroup> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '(' => open = Some(i),
            ')' => {
                if let Some(start) = open.take() {
                    if let Some(ids) = parse_group(&text[start + 1..i]) {
                        out.push(CitationGroup {
                            span: start..i + 1,
                            ids,
                        });
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Cited ids in first-appearance order, without duplicates.
pub fn extract_citations(text: &str) -> Vec<ReportId> {
    let mut seen = BTreeSet::new();
    citation_groups(text)
        .into_iter()
        .flat_map(|g| g.ids)
        .filter(|id| seen.insert(*id))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CitationCheck {
    /// Cited ids that resolve to no message.
    pub unknown_ids: Vec<ReportId>,
    /// Included messages the summary never cites.
    pub uncited_count: usize,
}

pub fn validate_citations(cited: &[ReportId], map: &CitationMap, included: &[ReportId]) -> CitationCheck {
    let cited_set: BTreeSet<ReportId> = cited.iter().copied().collect();
    let mut seen = BTreeSet::new();
    CitationCheck {
        unknown_ids: cited
            .iter()
            .copied()
            .filter(|id| !map.contains(*id) && seen.insert(*id))
            .collect(),
        uncited_count: included
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|id| !cited_set.contains(id))
            .count(),
    }
}
