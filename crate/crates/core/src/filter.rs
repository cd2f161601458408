//! Multilingual regex filtering of message windows.
//!
//! Patterns use the `regex` crate dialect with unanchored (substring)
//! semantics. Case-insensitive patterns use Unicode simple case folding, so a
//! lowercase Cyrillic pattern matches upper-case text.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::message::{RawMessage, TimeWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    En,
    Ru,
    Uk,
    Other,
}

impl FromStr for LanguageTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Self::En),
            "ru" => Ok(Self::Ru),
            "uk" => Ok(Self::Uk),
            "other" => Ok(Self::Other),
            _ => Err(alloc::format!(
                "unknown language tag '{s}' (expected en, ru, uk or other)"
            )),
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::En => "en",
            Self::Ru => "ru",
            Self::Uk => "uk",
            Self::Other => "other",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternSpec {
    pub topic: String,
    pub language: LanguageTag,
    pub pattern: String,
    pub case_insensitive: bool,
}

impl PatternSpec {
    fn build(&self) -> Result<Regex, regex::Error> {
        RegexBuilder::new(&self.pattern)
            .case_insensitive(self.case_insensitive)
            .unicode(true)
            .build()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("pattern {index} of topic '{topic}' does not compile: {message}")]
pub struct PatternCompileError {
    pub topic: String,
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PatternSetError {
    #[error("pattern set must not be empty")]
    Empty,
    #[error("topic must not be empty")]
    EmptyTopic,
    #[error("pattern {index} has topic '{found}', expected '{expected}'")]
    MixedTopics {
        index: usize,
        expected: String,
        found: String,
    },
}

/// Ordered patterns of one topic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternSet {
    topic: String,
    specs: Vec<PatternSpec>,
    source_path: String,
}

impl PatternSet {
    pub fn new(
        topic: impl Into<String>,
        specs: Vec<PatternSpec>,
        source_path: impl Into<String>,
    ) -> Result<Self, PatternSetError> {
        let topic = topic.into();
        if topic.is_empty() {
            return Err(PatternSetError::EmptyTopic);
        }
        if specs.is_empty() {
            return Err(PatternSetError::Empty);
        }
        if let Some((index, s)) = specs.iter().enumerate().find(|(_, s)| s.topic != topic) {
            return Err(PatternSetError::MixedTopics {
                index,
                expected: topic,
                found: s.topic.clone(),
            });
        }
        Ok(Self {
            topic,
            specs,
            source_path: source_path.into(),
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn specs(&self) -> &[PatternSpec] {
        &self.specs
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    /// Compiles every spec, reporting the first failure by index.
    pub fn check(&self) -> Result<(), PatternCompileError> {
        self.compile().map(|_| ())
    }

    pub fn compile(&self) -> Result<CompiledFilter, PatternCompileError> {
        compile_patterns(self)
    }
}

/// Immutable matcher for one pattern set; `Send + Sync`.
#[derive(Clone, Debug)]
pub struct CompiledFilter {
    topic: String,
    regexes: Vec<Regex>,
}

pub fn compile_patterns(set: &PatternSet) -> Result<CompiledFilter, PatternCompileError> {
    let regexes = set
        .specs
        .iter()
        .enumerate()
        .map(|(index, spec)| {
            spec.build().map_err(|e| PatternCompileError {
                topic: set.topic.clone(),
                index,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompiledFilter {
        topic: set.topic.clone(),
        regexes,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub hit_pattern_indices: Vec<usize>,
}

impl MatchResult {
    pub fn matched(&self) -> bool {
        !self.hit_pattern_indices.is_empty()
    }
}

impl CompiledFilter {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn pattern_count(&self) -> usize {
        self.regexes.len()
    }

    pub fn match_text(&self, text: &str) -> MatchResult {
        if text.is_empty() {
            return MatchResult::default();
        }
        MatchResult {
            hit_pattern_indices: self
                .regexes
                .iter()
                .enumerate()
                .filter(|(_, re)| re.is_match(text))
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn matches(&self, msg: &RawMessage) -> MatchResult {
        self.match_text(&msg.text)
    }
}

/// The relevant subset of a message window for one topic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilteredBatch {
    pub topic: String,
    pub window: TimeWindow,
    messages: Vec<RawMessage>,
    hits: Vec<MatchResult>,
}

impl FilteredBatch {
    pub fn empty(topic: impl Into<String>, window: TimeWindow) -> Self {
        Self {
            topic: topic.into(),
            window,
            messages: Vec::new(),
            hits: Vec::new(),
        }
    }

    /// Builds a batch from already-selected messages, checking each one
    /// against `filter` so the every-entry-matched invariant holds.
    pub fn from_matched(filter: &CompiledFilter, messages: Vec<RawMessage>, window: TimeWindow) -> Option<Self> {
        let hits: Vec<MatchResult> = messages.iter().map(|m| filter.matches(m)).collect();
        if hits.iter().all(MatchResult::matched) {
            Some(Self {
                topic: filter.topic.clone(),
                window,
                messages,
                hits,
            })
        } else {
            None
        }
    }

    pub fn messages(&self) -> &[RawMessage] {
        &self.messages
    }

    pub fn hits(&self) -> &[MatchResult] {
        &self.hits
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn into_messages(self) -> Vec<RawMessage> {
        self.messages
    }
}

/// Keeps exactly the matching messages, preserving input order.
pub fn filter_batch<'a, I>(filter: &CompiledFilter, window_messages: I, window: TimeWindow) -> FilteredBatch
where
    I: IntoIterator<Item = &'a RawMessage>,
{
    let mut batch = FilteredBatch::empty(filter.topic.clone(), window);
    batch.extend(filter, window_messages);
    batch
}

impl FilteredBatch {
    /// Appends matching messages from another chunk of the window; lets callers
    /// stream a large window through the filter chunk by chunk.
    pub fn extend<'a, I>(&mut self, filter: &CompiledFilter, window_messages: I)
    where
        I: IntoIterator<Item = &'a RawMessage>,
    {
        for m in window_messages {
            let hit = filter.matches(m);
            if hit.matched() {
                self.messages.push(m.clone());
                self.hits.push(hit);
            }
        }
    }
}
