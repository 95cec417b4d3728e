//! Post-processing of free-text model answers into structured verdicts.
//!
//! Models are instructed to answer with a bare "yes"/"no", a single whole
//! number, or one of the listed diagram types, but frequently reply in prose.
//! The parsers here recover the relevant token when possible and return
//! [`ParsedAnswer::Invalid`] otherwise. Invalid is a first-class outcome and
//! is never silently coerced; every parser is total over arbitrary input.
//!
//! Matching is purely lexical and token-bounded: "cannot" does not contain a
//! "no" answer, "yesterday" does not contain a "yes", and the "3" in "3D" is
//! not a count.

use serde::{Deserialize, Serialize};

use crate::catalog::{AnswerKind, DiagramType};

/// One verbatim model reply, tagged with the model turn that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub text: String,
    pub turn_index: usize,
}

impl RawAnswer {
    pub fn new(text: impl Into<String>, turn_index: usize) -> RawAnswer {
        RawAnswer {
            text: text.into(),
            turn_index,
        }
    }
}

/// A structured verdict extracted from model text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedAnswer {
    YesNo(bool),
    Number(u32),
    TypeChoice(DiagramType),
    Invalid,
}

impl ParsedAnswer {
    pub fn is_invalid(self) -> bool {
        matches!(self, ParsedAnswer::Invalid)
    }

    /// The answer kind this verdict satisfies, if any.
    pub fn kind(self) -> Option<AnswerKind> {
        match self {
            ParsedAnswer::YesNo(_) => Some(AnswerKind::YesNo),
            ParsedAnswer::Number(_) => Some(AnswerKind::Count),
            ParsedAnswer::TypeChoice(_) => Some(AnswerKind::TypeChoice),
            ParsedAnswer::Invalid => None,
        }
    }
}

/// Dispatch to the parser matching the question's answer kind.
pub fn parse_answer(kind: AnswerKind, raw: &RawAnswer) -> ParsedAnswer {
    match kind {
        AnswerKind::YesNo => parse_yes_no(raw),
        AnswerKind::Count => parse_count(raw),
        AnswerKind::TypeChoice => parse_diagram_type(raw),
    }
}

/// Alphanumeric tokens of the lower-cased text. Hyphens and all other
/// punctuation act as separators here (type-choice matching treats hyphens
/// differently, see [`parse_diagram_type`]).
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Extract a yes/no verdict.
///
/// The lower-cased answer is searched for a token-bounded "yes" first; if none
/// is found, for a token-bounded "no". Anything else is Invalid.
pub fn parse_yes_no(raw: &RawAnswer) -> ParsedAnswer {
    let lower = raw.text.to_lowercase();
    let mut saw_no = false;
    for tok in tokens(&lower) {
        if tok == "yes" {
            return ParsedAnswer::YesNo(true);
        }
        if tok == "no" {
            saw_no = true;
        }
    }
    if saw_no {
        ParsedAnswer::YesNo(false)
    } else {
        ParsedAnswer::Invalid
    }
}

const NUMBER_WORDS: [(&str, u32); 15] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
    ("thirteen", 13),
    ("fourteen", 14),
    ("fifteen", 15),
];

/// Whole-number tokens in the text.
///
/// A digit run counts only when it stands alone: runs embedded in a larger
/// alphanumeric token ("3D", "v2x") are skipped, and so are both sides of a
/// decimal point ("3.5" contributes nothing).
fn whole_number_tokens(text: &str) -> Vec<u32> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before_ok = match start.checked_sub(1).map(|p| chars[p]) {
            None => true,
            Some('.') => {
                !matches!(start.checked_sub(2).map(|p| chars[p]), Some(c) if c.is_ascii_digit())
            }
            Some(c) => !c.is_alphanumeric(),
        };
        let after_ok = match chars.get(i) {
            None => true,
            Some('.') => !matches!(chars.get(i + 1), Some(c) if c.is_ascii_digit()),
            Some(c) => !c.is_alphanumeric(),
        };
        if before_ok && after_ok {
            let run: String = chars[start..i].iter().collect();
            let value = run.parse::<u64>().unwrap_or(u64::MAX);
            out.push(value.min(u32::MAX as u64) as u32);
        }
    }
    out
}

/// Extract a count.
///
/// Digit tokens are scanned first and the highest number wins; if there are
/// none, the number words "one" through "fifteen" are scanned the same way.
pub fn parse_count(raw: &RawAnswer) -> ParsedAnswer {
    let digits = whole_number_tokens(&raw.text);
    if let Some(max) = digits.into_iter().max() {
        return ParsedAnswer::Number(max);
    }
    let lower = raw.text.to_lowercase();
    let max_word = tokens(&lower)
        .filter_map(|tok| {
            NUMBER_WORDS
                .iter()
                .find(|(w, _)| *w == tok)
                .map(|(_, v)| *v)
        })
        .max();
    match max_word {
        Some(v) => ParsedAnswer::Number(v),
        None => ParsedAnswer::Invalid,
    }
}

/// Token characters for type-choice matching: hyphen is part of a token here,
/// so "scatter-line" is a single candidate and "bar-like" shields its "bar".
fn is_type_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

/// Extract a diagram type.
///
/// Candidate names are matched against the lower-cased text longest-first, so
/// "scatter-line" wins over both "scatter" and "line"; among names of equal
/// length the earliest occurrence wins. No match means Invalid.
pub fn parse_diagram_type(raw: &RawAnswer) -> ParsedAnswer {
    let lower = raw.text.to_lowercase();
    let mut best: Option<(usize, usize, DiagramType)> = None;
    for ty in DiagramType::ALL {
        let name = ty.name();
        if let Some(pos) = find_token_bounded(&lower, name) {
            let cand = (name.len(), pos, ty);
            best = match best {
                None => Some(cand),
                // longer name wins; same length: earlier position wins
                Some(b) if (cand.0, std::cmp::Reverse(cand.1)) > (b.0, std::cmp::Reverse(b.1)) => {
                    Some(cand)
                }
                other => other,
            };
        }
    }
    match best {
        Some((_, _, ty)) => ParsedAnswer::TypeChoice(ty),
        None => ParsedAnswer::Invalid,
    }
}

/// Earliest byte offset where `needle` occurs in `haystack` bounded by
/// non-type-token characters on both sides.
fn find_token_bounded(haystack: &str, needle: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(off) = haystack[from..].find(needle) {
        let pos = from + off;
        let end = pos + needle.len();
        let before_ok = haystack[..pos]
            .chars()
            .next_back()
            .is_none_or(|c| !is_type_token_char(c));
        let after_ok = haystack[end..]
            .chars()
            .next()
            .is_none_or(|c| !is_type_token_char(c));
        if before_ok && after_ok {
            return Some(pos);
        }
        // needle starts with an ASCII letter, so pos + 1 stays on a char boundary
        from = pos + 1;
    }
    None
}
