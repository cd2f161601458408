//! Core of the chanwatch channel-monitoring pipeline.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): the
//! message index behind every store backend, the multilingual regex filter,
//! engagement metrics, citation grounding, prompt assembly, report rendering
//! and chunking. IO, scheduling and network clients live in the `chanwatch`
//! crate.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chunk;
pub mod citation;
pub mod error;
pub mod filter;
pub mod index;
pub mod message;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod summary;

pub use chunk::{chunk_document, chunk_text, ChunkError};
pub use citation::{
    assign_report_ids, extract_citations, validate_citations, CitationCheck, CitationMap, CitationTarget, EmptyBatch,
    ReportId,
};
pub use error::InvalidMessage;
pub use filter::{
    compile_patterns, filter_batch, CompiledFilter, FilteredBatch, LanguageTag, MatchResult, PatternCompileError,
    PatternSet, PatternSpec,
};
pub use index::{MessageIndex, StoredCount, Upsert};
pub use message::{ChannelList, ChannelRef, MessageKey, RawMessage, TimeWindow, Timestamp};
pub use metrics::{compute_metrics, daily_histogram, EngagementMetrics};
pub use prompt::{build_prompts, detect_sentinel, serialize_messages, PromptBundle};
pub use report::{linkify, render_report, LinkStyle, ReportDocument};
pub use summary::{check_translation_citations, Language, SummaryKind, SummaryResult, TranslationCitationDrift};
