use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::citation::{extract_citations, validate_citations, CitationCheck, CitationMap, ReportId};
use crate::prompt::{detect_sentinel, SENTINEL_EN, SENTINEL_FI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fi,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::En, Language::Fi];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fi => "fi",
        }
    }

    pub fn sentinel(self) -> &'static str {
        match self {
            Language::En => SENTINEL_EN,
            Language::Fi => SENTINEL_FI,
        }
    }

    /// Summary block used when no model output is available.
    pub fn unavailable_notice(self) -> &'static str {
        match self {
            Language::En => {
                "Summary unavailable: the language model could not produce a summary. The metrics below are complete."
            }
            Language::Fi => {
                "Yhteenveto ei ole saatavilla: kielimalli ei tuottanut yhteenvetoa. Alla olevat tunnusluvut ovat täydelliset."
            }
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummaryKind {
    Generated,
    Sentinel,
    /// Metrics-only report: the model was unreachable or nothing fit the budget.
    Unavailable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryResult {
    pub text: String,
    pub language: Language,
    pub kind: SummaryKind,
    pub cited_ids: Vec<ReportId>,
    pub validation: CitationCheck,
}

impl SummaryResult {
    /// Classifies model output and checks its citations against `map`.
    pub fn from_model(text: String, language: Language, map: &CitationMap, included: &[ReportId]) -> Self {
        if detect_sentinel(&text) {
            return Self::sentinel(language);
        }
        let cited_ids = extract_citations(&text);
        let validation = validate_citations(&cited_ids, map, included);
        Self {
            text,
            language,
            kind: SummaryKind::Generated,
            cited_ids,
            validation,
        }
    }

    pub fn sentinel(language: Language) -> Self {
        Self {
            text: language.sentinel().into(),
            language,
            kind: SummaryKind::Sentinel,
            cited_ids: Vec::new(),
            validation: CitationCheck::default(),
        }
    }

    pub fn unavailable(language: Language) -> Self {
        Self {
            text: language.unavailable_notice().into(),
            language,
            kind: SummaryKind::Unavailable,
            cited_ids: Vec::new(),
            validation: CitationCheck::default(),
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.kind == SummaryKind::Sentinel
    }

    /// A generated summary that cites nothing at all.
    pub fn is_ungrounded(&self) -> bool {
        self.kind == SummaryKind::Generated && self.cited_ids.is_empty()
    }
}

/// Citations changed between a summary and its translation.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("translation changed the cited message ids ({summary_ids:?} became {translation_ids:?})")]
pub struct TranslationCitationDrift {
    pub summary: String,
    pub translation: String,
    pub summary_ids: Vec<ReportId>,
    pub translation_ids: Vec<ReportId>,
}

/// Checks that `translation` cites the same set of ids as `summary`.
pub fn check_translation_citations(summary: &str, translation: &str) -> Result<(), TranslationCitationDrift> {
    let a = extract_citations(summary);
    let b = extract_citations(translation);
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    if sa == sb {
        Ok(())
    } else {
        Err(TranslationCitationDrift {
            summary: summary.into(),
            translation: translation.into(),
            summary_ids: a,
            translation_ids: b,
        })
    }
}
