//! Prompt resources and the message serialization that fills them.
//!
//! The prompt texts live in `prompts/*.txt` and are embedded verbatim. Slots
//! (`{messages_text}`, `{summary}`) are substituted in a single pass, so braces
//! inside the inserted text are never expanded again.

use alloc::string::String;
use alloc::vec::Vec;

use crate::citation::{CitationMap, ReportId};
use crate::filter::FilteredBatch;
use crate::message::iso;

pub const SYSTEM_PROMPT: &str = include_str!("../prompts/system.txt");
pub const USER_PROMPT_TEMPLATE: &str = include_str!("../prompts/user.txt");
pub const TRANSLATION_SYSTEM_PROMPT: &str = include_str!("../prompts/translation_system.txt");
pub const TRANSLATION_USER_TEMPLATE: &str = include_str!("../prompts/translation_user.txt");

pub const MESSAGES_SLOT: &str = "{messages_text}";
pub const SUMMARY_SLOT: &str = "{summary}";

/// The no-news sentence the prompts ask the model to emit.
pub const SENTINEL_EN: &str = "Nothing newsworthy was mentioned the last day";
/// Fixed Finnish rendering of [`SENTINEL_EN`]; never produced by the model.
pub const SENTINEL_FI: &str = "Viimeisen vuorokauden aikana ei mainittu mitään uutisarvoista";

pub const DEFAULT_CONTEXT_BUDGET: usize = 48_000;

const BLOCK_SEPARATOR: &str = "\n\n";

fn fill_slot(template: &str, slot: &str, value: &str) -> String {
    match template.split_once(slot) {
        Some((head, tail)) => {
            let mut out = String::with_capacity(template.len() + value.len());
            out.push_str(head);
            out.push_str(value);
            out.push_str(tail);
            out
        }
        None => template.into(),
    }
}

/// Messages rendered for the `{messages_text}` slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SerializedMessages {
    pub text: String,
    pub included: Vec<ReportId>,
    pub dropped: Vec<ReportId>,
}

fn render_block(id: ReportId, display_name: &str, m: &crate::message::RawMessage) -> String {
    alloc::format!(
        "[ID:{id}] ({display_name}, {}, views:{}, forwards:{})\n{}",
        iso(&m.posted_at),
        m.views,
        m.forwards,
        m.text
    )
}

/// Renders every message of `batch` as an `[ID:n]` block. When the whole
/// rendering exceeds `budget` characters, messages are ranked by views
/// (descending, ties by id) and the lowest-ranked are dropped until the rest
/// fits. Kept blocks stay in batch order.
pub fn serialize_messages(batch: &FilteredBatch, map: &CitationMap, budget: usize) -> SerializedMessages {
    let blocks: Vec<(ReportId, u64, String)> = batch
        .messages()
        .iter()
        .zip(map.iter())
        .map(|(m, (id, target))| (id, m.views, render_block(id, &target.display_name, m)))
        .collect();

    let mut ranked: Vec<usize> = (0..blocks.len()).collect();
    ranked.sort_by(|&a, &b| blocks[b].1.cmp(&blocks[a].1).then(blocks[a].0.cmp(&blocks[b].0)));

    // Largest prefix of the ranking whose joined rendering fits the budget.
    let sep = BLOCK_SEPARATOR.chars().count();
    let mut used = 0usize;
    let mut keep = 0usize;
    for (k, &i) in ranked.iter().enumerate() {
        let len = blocks[i].2.chars().count() + if k == 0 { 0 } else { sep };
        if used + len > budget {
            break;
        }
        used += len;
        keep = k + 1;
    }

    let mut kept = alloc::vec![false; blocks.len()];
    for &i in &ranked[..keep] {
        kept[i] = true;
    }
    let mut out = SerializedMessages::default();
    for (i, (id, _, block)) in blocks.iter().enumerate() {
        if kept[i] {
            if !out.text.is_empty() {
                out.text.push_str(BLOCK_SEPARATOR);
            }
            out.text.push_str(block);
            out.included.push(*id);
        } else {
            out.dropped.push(*id);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub user_prompt: String,
    pub included_ids: Vec<ReportId>,
    pub dropped_ids: Vec<ReportId>,
}

pub fn build_prompts(messages: SerializedMessages) -> PromptBundle {
    PromptBundle {
        system_prompt: SYSTEM_PROMPT.into(),
        user_prompt: fill_slot(USER_PROMPT_TEMPLATE, MESSAGES_SLOT, &messages.text),
        included_ids: messages.included,
        dropped_ids: messages.dropped,
    }
}

/// `(system, user)` prompts asking for a Finnish translation of `summary`.
pub fn translation_prompts(summary: &str) -> (String, String) {
    (
        TRANSLATION_SYSTEM_PROMPT.into(),
        fill_slot(TRANSLATION_USER_TEMPLATE, SUMMARY_SLOT, summary),
    )
}

fn strip_quotes(s: &str) -> &str {
    const PAIRS: [(char, char); 5] = [('"', '"'), ('\'', '\''), ('“', '”'), ('«', '»'), ('„', '“')];
    let mut s = s.trim();
    loop {
        let before = s;
        for (open, close) in PAIRS {
            if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
                s = inner.trim();
            }
        }
        if s == before {
            return s;
        }
    }
}

/// `true` iff `text` is the no-news sentence, ignoring surrounding whitespace
/// and quotes, ASCII case and one trailing period.
pub fn detect_sentinel(text: &str) -> bool {
    let core = strip_quotes(text);
    let core = core.strip_suffix('.').unwrap_or(core).trim_end();
    core.eq_ignore_ascii_case(SENTINEL_EN)
}
