//! Splitting report text into size-limited parts for chat delivery.
//!
//! Parts are contiguous slices of the input cut after a paragraph break, or
//! after a line break when one paragraph alone is too long. Concatenating the
//! parts without their `(part i/n)` prefixes gives back the input exactly.

use alloc::string::String;
use alloc::vec::Vec;

use crate::report::{LinkStyle, ReportDocument};

pub const MIN_CHUNK_LIMIT: usize = 200;
pub const DEFAULT_CHUNK_LIMIT: usize = 3000;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("a single line of {line_chars} characters exceeds the limit of {limit}")]
    UnsplittableContent { line_chars: usize, limit: usize },
    #[error("chunk limit {0} is below the minimum of 200")]
    LimitTooSmall(usize),
}

fn prefix(i: usize, n: usize) -> String {
    alloc::format!("(part {i}/{n})\n")
}

/// Pieces that must not be split: paragraphs (with their trailing blank-line
/// separator), or the lines of a paragraph that is longer than `room`.
fn atoms(text: &str, room: usize, limit: usize) -> Result<Vec<&str>, ChunkError> {
    let mut out = Vec::new();
    for para in text.split_inclusive("\n\n") {
        if para.chars().count() <= room {
            out.push(para);
            continue;
        }
        for line in para.split_inclusive('\n') {
            let n = line.chars().count();
            if n > room {
                return Err(ChunkError::UnsplittableContent {
                    line_chars: line.trim_end_matches('\n').chars().count(),
                    limit,
                });
            }
            out.push(line);
        }
    }
    Ok(out)
}

fn pack(text: &str, room: usize, limit: usize) -> Result<Vec<&str>, ChunkError> {
    let mut parts = Vec::new();
    let mut start = 0usize;
    let mut len = 0usize;
    let mut end = 0usize;
    for atom in atoms(text, room, limit)? {
        let n = atom.chars().count();
        if len + n > room && end > start {
            parts.push(&text[start..end]);
            start = end;
            len = 0;
        }
        end += atom.len();
        len += n;
    }
    if end > start {
        parts.push(&text[start..end]);
    }
    Ok(parts)
}

/// Splits `text` into parts of at most `limit` characters including the
/// `(part i/n)` prefix added when there is more than one part.
pub fn chunk_text(text: &str, limit: usize) -> Result<Vec<String>, ChunkError> {
    if limit < MIN_CHUNK_LIMIT {
        return Err(ChunkError::LimitTooSmall(limit));
    }
    if text.chars().count() <= limit {
        return Ok(alloc::vec![String::from(text)]);
    }
    // The prefix width depends on the part count; grow the guess until stable.
    let mut guess = 2usize;
    loop {
        let reserve = prefix(guess, guess).chars().count();
        let parts = pack(text, limit - reserve, limit)?;
        let n = parts.len();
        if prefix(n, n).chars().count() <= reserve {
            return Ok(parts
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut s = prefix(i + 1, n);
                    s.push_str(p);
                    s
                })
                .collect());
        }
        guess = n;
    }
}

/// Strips the `(part i/n)` prefix added by [`chunk_text`].
pub fn strip_part_prefix(part: &str) -> &str {
    if let Some(rest) = part.strip_prefix("(part ") {
        if let Some(nl) = rest.find(")\n") {
            let head = &rest[..nl];
            if head.split_once('/').is_some_and(|(a, b)| {
                !a.is_empty() && !b.is_empty() && (a.bytes().chain(b.bytes())).all(|c| c.is_ascii_digit())
            }) {
                return &rest[nl + 2..];
            }
        }
    }
    part
}

pub fn chunk_document(doc: &ReportDocument, limit: usize) -> Result<Vec<String>, ChunkError> {
    chunk_text(&doc.render(LinkStyle::Token), limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reassemble(parts: &[String]) -> String {
        parts.iter().map(|p| strip_part_prefix(p)).collect()
    }

    fn doc_like(paragraphs: &[usize]) -> String {
        paragraphs
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let line = "x".repeat(*n);
                alloc::format!("p{i} {line}")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    #[test]
    fn short_doc_single_part() {
        let text = doc_like(&[200, 290]);
        let parts = chunk_text(&text, 3000).unwrap();
        assert_eq!(parts, alloc::vec![text]);
    }

    #[test]
    fn seven_thousand_chars_three_parts() {
        let text = doc_like(&[1400, 1400, 1400, 1400, 1390]);
        assert!(text.chars().count() >= 7000);
        let parts = chunk_text(&text, 3000).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts[0].starts_with("(part 1/3)\n"));
        assert!(parts[2].starts_with("(part 3/3)\n"));
        assert!(parts.iter().all(|p| p.chars().count() <= 3000));
        assert_eq!(reassemble(&parts), text);
    }

    #[test]
    fn long_line_is_unsplittable() {
        let text = "y".repeat(4000);
        assert!(matches!(
            chunk_text(&text, 3000),
            Err(ChunkError::UnsplittableContent { .. })
        ));
    }

    #[test]
    fn long_paragraph_splits_on_lines() {
        let para: String = (0..40)
            .map(|i| alloc::format!("line {i} {}\n", "z".repeat(90)))
            .collect();
        let parts = chunk_text(&para, 1000).unwrap();
        assert!(parts.len() > 1);
        for p in &parts {
            assert!(p.chars().count() <= 1000);
            assert!(strip_part_prefix(p).ends_with('\n'));
        }
        assert_eq!(reassemble(&parts), para);
    }

    #[test]
    fn limit_floor() {
        assert_eq!(chunk_text("x", 199), Err(ChunkError::LimitTooSmall(199)));
    }

    #[test]
    fn tokens_never_split() {
        let token = "<https://t.me/alpha/11|(1)>";
        let text = (0..200)
            .map(|i| alloc::format!("claim {i} {token}"))
            .collect::<Vec<_>>()
            .join("\n");
        for part in chunk_text(&text, 500).unwrap() {
            let body = strip_part_prefix(&part);
            assert_eq!(body.matches('<').count(), body.matches(")>").count());
        }
    }

    proptest! {
        #[test]
        fn lossless_and_bounded(paras in proptest::collection::vec(1usize..600, 1..30), limit in 200usize..2000) {
            let text = doc_like(&paras);
            match chunk_text(&text, limit) {
                Ok(parts) => {
                    prop_assert_eq!(reassemble(&parts), text);
                    for p in &parts {
                        prop_assert!(p.chars().count() <= limit);
                    }
                    if parts.len() > 1 {
                        let n = parts.len();
                        for (i, p) in parts.iter().enumerate() {
                            let expected = alloc::format!("(part {}/{})\n", i + 1, n);
                            prop_assert!(p.starts_with(&expected));
                        }
                    }
                }
                Err(ChunkError::UnsplittableContent { line_chars, .. }) => {
                    prop_assert!(line_chars + 14 > limit);
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
