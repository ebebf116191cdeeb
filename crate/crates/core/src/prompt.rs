//! Prompt templates and response parsing.
//!
//! Templates live as plain-text assets under `assets/prompts/` and are
//! compiled into the binary. Each `{}` in a template body is one slot;
//! [`render`] substitutes slots in order in a single pass, so slot text that
//! itself contains `{}` is inserted verbatim.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLACEHOLDER: &str = "{}";
pub const ANSWER_QUESTION: &str = "IS THIS MISINFORMATION?";
pub const QUERY_PREFIX: &str = "QUERY:";
/// Line the skeptic emits when it has nothing left to challenge.
pub const NO_FURTHER_QUESTIONS: &str = "NO FURTHER QUESTIONS";
/// Framing line placed ahead of peer responses when agents are told they are
/// debating another AI.
pub const AI_FRAMING_LINE: &str = "Another AI agent responded:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template} expects {expected} slot(s), got {got}")]
    Arity {
        template: TemplateId,
        expected: usize,
        got: usize,
    },
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    InitialWithEvidence,
    InitialNoEvidence,
    RoundOne,
    LaterRound,
    Judge,
    StanceMisinformation,
    StanceNotMisinformation,
    SkepticReview,
    ActorRevision,
    QueryInstruction,
    SearchResults,
    SummarizePage,
    MergeSummaries,
    SummarizeSearch,
}

impl TemplateId {
    pub const ALL: [TemplateId; 14] = [
        TemplateId::InitialWithEvidence,
        TemplateId::InitialNoEvidence,
        TemplateId::RoundOne,
        TemplateId::LaterRound,
        TemplateId::Judge,
        TemplateId::StanceMisinformation,
        TemplateId::StanceNotMisinformation,
        TemplateId::SkepticReview,
        TemplateId::ActorRevision,
        TemplateId::QueryInstruction,
        TemplateId::SearchResults,
        TemplateId::SummarizePage,
        TemplateId::MergeSummaries,
        TemplateId::SummarizeSearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::InitialWithEvidence => "initial_with_evidence",
            TemplateId::InitialNoEvidence => "initial_no_evidence",
            TemplateId::RoundOne => "round_one",
            TemplateId::LaterRound => "later_round",
            TemplateId::Judge => "judge",
            TemplateId::StanceMisinformation => "stance_misinformation",
            TemplateId::StanceNotMisinformation => "stance_not_misinformation",
            TemplateId::SkepticReview => "skeptic_review",
            TemplateId::ActorRevision => "actor_revision",
            TemplateId::QueryInstruction => "query_instruction",
            TemplateId::SearchResults => "search_results",
            TemplateId::SummarizePage => "summarize_page",
            TemplateId::MergeSummaries => "merge_summaries",
            TemplateId::SummarizeSearch => "summarize_search",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            TemplateId::InitialWithEvidence => 2,
            TemplateId::InitialNoEvidence => 1,
            TemplateId::RoundOne | TemplateId::LaterRound => 1,
            TemplateId::Judge => 2,
            TemplateId::StanceMisinformation | TemplateId::StanceNotMisinformation | TemplateId::QueryInstruction => 0,
            TemplateId::SkepticReview => 2,
            TemplateId::ActorRevision => 1,
            TemplateId::SearchResults => 2,
            TemplateId::SummarizePage | TemplateId::MergeSummaries => 1,
            TemplateId::SummarizeSearch => 2,
        }
    }

    fn raw(self) -> &'static str {
        match self {
            TemplateId::InitialWithEvidence => include_str!("../assets/prompts/initial_with_evidence.txt"),
            TemplateId::InitialNoEvidence => include_str!("../assets/prompts/initial_no_evidence.txt"),
            TemplateId::RoundOne => include_str!("../assets/prompts/round_one.txt"),
            TemplateId::LaterRound => include_str!("../assets/prompts/later_round.txt"),
            TemplateId::Judge => include_str!("../assets/prompts/judge.txt"),
            TemplateId::StanceMisinformation => include_str!("../assets/prompts/stance_misinformation.txt"),
            TemplateId::StanceNotMisinformation => {
                include_str!("../assets/prompts/stance_not_misinformation.txt")
            }
            TemplateId::SkepticReview => include_str!("../assets/prompts/skeptic_review.txt"),
            TemplateId::ActorRevision => include_str!("../assets/prompts/actor_revision.txt"),
            TemplateId::QueryInstruction => include_str!("../assets/prompts/query_instruction.txt"),
            TemplateId::SearchResults => include_str!("../assets/prompts/search_results.txt"),
            TemplateId::SummarizePage => include_str!("../assets/prompts/summarize_page.txt"),
            TemplateId::MergeSummaries => include_str!("../assets/prompts/merge_summaries.txt"),
            TemplateId::SummarizeSearch => include_str!("../assets/prompts/summarize_search.txt"),
        }
    }

    /// Template body with line endings normalized to `\n`.
    pub fn body(self) -> String {
        normalize_newlines(self.raw())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

pub fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Substitutes `slots` into the template in order.
pub fn render<S: AsRef<str>>(template: TemplateId, slots: &[S]) -> Result<String, PromptError> {
    if slots.len() != template.arity() {
        return Err(PromptError::Arity {
            template,
            expected: template.arity(),
            got: slots.len(),
        });
    }
    let body = template.body();
    let mut pieces = body.split(PLACEHOLDER);
    let mut out = String::with_capacity(body.len() + slots.iter().map(|s| s.as_ref().len()).sum::<usize>());
    out.push_str(pieces.next().unwrap_or_default());
    for (slot, piece) in slots.iter().zip(pieces) {
        out.push_str(slot.as_ref());
        out.push_str(piece);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Misinformation,
    NotMisinformation,
    Unparseable,
}

impl Verdict {
    pub fn is_parseable(self) -> bool {
        self != Verdict::Unparseable
    }

    /// The YES/NO token an agent would use for this verdict.
    pub fn answer_token(self) -> Option<&'static str> {
        match self {
            Verdict::Misinformation => Some("YES"),
            Verdict::NotMisinformation => Some("NO"),
            Verdict::Unparseable => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Misinformation => "MISINFORMATION",
            Verdict::NotMisinformation => "NOT MISINFORMATION",
            Verdict::Unparseable => "UNPARSEABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub verdict: Verdict,
    /// The response with the terminal answer removed. Always a substring of
    /// the raw response.
    pub explanation: String,
}

static ANSWER_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").expect("valid regex"));
static ANCHOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bis\s+this\s+misinformation\b").expect("valid regex"));

/// Extracts the YES/NO verdict from an agent response.
///
/// The decisive token is the last standalone YES or NO after the final
/// occurrence of "IS THIS MISINFORMATION". Without that phrase (or with no
/// token after it) the last YES/NO anywhere in the text decides. A response
/// with neither token is [`Verdict::Unparseable`].
pub fn parse_verdict(response: &str) -> ParsedTurn {
    let anchor = ANCHOR.find_iter(response).last();
    let after_anchor = anchor.and_then(|a| {
        ANSWER_TOKEN
            .find_iter(&response[a.end()..])
            .last()
            .map(|m| (a.end() + m.start(), a.end() + m.end()))
    });
    let decisive = after_anchor.or_else(|| ANSWER_TOKEN.find_iter(response).last().map(|m| (m.start(), m.end())));

    let Some((start, end)) = decisive else {
        return ParsedTurn {
            verdict: Verdict::Unparseable,
            explanation: response.trim().to_string(),
        };
    };

    let verdict = if response[start..end].eq_ignore_ascii_case("yes") {
        Verdict::Misinformation
    } else {
        Verdict::NotMisinformation
    };

    let terminal = !response[end..].chars().any(char::is_alphanumeric);
    let explanation = if terminal {
        let cut = match anchor {
            Some(a) if a.end() <= start && !response[a.end()..start].chars().any(char::is_alphanumeric) => a.start(),
            _ => start,
        };
        response[..cut]
            .trim_end_matches(|c: char| c.is_whitespace() || c == '*' || c == '#')
            .trim_start()
            .to_string()
    } else {
        response.trim().to_string()
    };

    ParsedTurn { verdict, explanation }
}

/// Lines of the form `QUERY: <terms>`, in order of appearance.
pub fn extract_queries(response: &str) -> Vec<String> {
    response
        .lines()
        .filter_map(|line| {
            let line = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '-' | '*' | '>'));
            let head = line.get(..QUERY_PREFIX.len())?;
            if !head.eq_ignore_ascii_case(QUERY_PREFIX) {
                return None;
            }
            let query = line[QUERY_PREFIX.len()..].trim().trim_matches('*').trim();
            (!query.is_empty()).then(|| query.to_string())
        })
        .collect()
}
