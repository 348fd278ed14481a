//! Span identity, answer types, scored candidates and the shared ranking order.
//!
//! Every argmax in the crate goes through [`rank_cmp`]: higher score first,
//! then non-null before [`Span::Null`], then smaller start, then smaller end.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Opaque identifier of one QA system (one prediction file).
pub type SystemId = String;
/// Opaque identifier of one question/document example.
pub type ExampleId = String;

/// A token-indexed answer span, or the reserved null answer.
///
/// The derived `Ord` places every token span before `Null`, and token spans
/// in `(start, end)` order. This is exactly the tie-break component of
/// [`rank_cmp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Span {
    Tokens { start: u32, end: u32 },
    Null,
}

impl Span {
    /// Builds a token span, rejecting empty or inverted ranges.
    pub fn new(start: u32, end: u32) -> Option<Span> {
        (start < end).then_some(Span::Tokens { start, end })
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Span::Null)
    }

    /// `(start, end)` for token spans.
    pub fn bounds(&self) -> Option<(u32, u32)> {
        match *self {
            Span::Tokens { start, end } => Some((start, end)),
            Span::Null => None,
        }
    }

    /// True when `inner` lies within `self`. Null contains nothing and is
    /// contained in nothing.
    pub fn contains(&self, inner: &Span) -> bool {
        match (self.bounds(), inner.bounds()) {
            (Some((os, oe)), Some((is, ie))) => os <= is && ie <= oe,
            _ => false,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Span::Tokens { start, end } => write!(f, "({start},{end})"),
            Span::Null => f.write_str("NULL"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Long,
    Short,
}

impl AnswerType {
    pub const ALL: [AnswerType; 2] = [AnswerType::Long, AnswerType::Short];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnswerType::Long => "long",
            AnswerType::Short => "short",
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" | "la" => Ok(AnswerType::Long),
            "short" | "sa" => Ok(AnswerType::Short),
            other => Err(format!("unknown answer type `{other}`")),
        }
    }
}

/// One scored span emitted by a system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub span: Span,
    pub score: f64,
}

impl Candidate {
    pub fn new(span: Span, score: f64) -> Self {
        Candidate { span, score }
    }
}

/// Ranking order over `(span, score)` pairs; `Less` means `a` ranks first.
///
/// Scores must be finite. Higher score wins; ties go to the non-null span,
/// then the smaller start, then the smaller end.
pub fn rank_cmp(a: (&Span, f64), b: (&Span, f64)) -> Ordering {
    debug_assert!(a.1.is_finite() && b.1.is_finite());
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// [`rank_cmp`] on candidates.
pub fn compare_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    rank_cmp((&a.span, a.score), (&b.span, b.score))
}

/// The first-ranked candidate under [`rank_cmp`], if any.
pub fn top_candidate<'a, I>(candidates: I) -> Option<&'a Candidate>
where
    I: IntoIterator<Item = &'a Candidate>,
{
    candidates
        .into_iter()
        .min_by(|a, b| compare_candidates(a, b))
}

/// The first-ranked `(span, score)` entry of a score map.
pub fn argmax_span<'a, I>(entries: I) -> Option<(Span, f64)>
where
    I: IntoIterator<Item = &'a (Span, f64)>,
{
    entries
        .into_iter()
        .min_by(|a, b| rank_cmp((&a.0, a.1), (&b.0, b.1)))
        .copied()
}
