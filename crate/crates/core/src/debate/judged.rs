//! Judged debate: two fixed-stance debaters argue for `k` rounds, then a
//! judge decides from the transcript alone.

use std::collections::HashSet;

use super::session::DebateRuntime;
use super::{AgentRole, DebateConfig, DebateError, DebateSession, DebateStrategy, ResultFlag, SessionResult};
use crate::dataset::ImageTextPair;
use crate::evidence::EvidenceBundle;
use crate::prompt::{TemplateId, Verdict, render};

/// Length of the character windows compared when checking that evidence
/// text does not reach the judge.
pub const EVIDENCE_WINDOW: usize = 20;
pub const REDACTION_MARKER: &str = "[evidence withheld]";

fn window_set(texts: &[&str], n: usize) -> HashSet<Vec<char>> {
    let mut set = HashSet::new();
    for text in texts {
        let chars: Vec<char> = text.chars().collect();
        for w in chars.windows(n) {
            set.insert(w.to_vec());
        }
    }
    set
}

/// True if `text` contains any `n`-character substring of any `evidence`
/// text.
pub fn shares_window(text: &str, evidence: &[&str], n: usize) -> bool {
    let set = window_set(evidence, n);
    let chars: Vec<char> = text.chars().collect();
    chars.windows(n).any(|w| set.contains(w))
}

fn redact_pass(text: &str, set: &HashSet<Vec<char>>, n: usize, marker: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut covered = vec![false; chars.len()];
    let mut any = false;
    for (i, w) in chars.windows(n).enumerate() {
        if set.contains(w) {
            covered[i..i + n].iter_mut().for_each(|c| *c = true);
            any = true;
        }
    }
    if !any {
        return None;
    }
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        if covered[i] {
            out.push_str(marker);
            while i < chars.len() && covered[i] {
                i += 1;
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    Some(out)
}

/// Replaces every span of `text` that shares a [`EVIDENCE_WINDOW`]-character
/// window with any evidence text by [`REDACTION_MARKER`].
///
/// If the marker itself recreates a shared window (evidence quoting the
/// marker), later passes delete the offending spans outright; every such
/// pass shortens the text, so the loop ends.
pub fn redact_shared_windows(text: &str, evidence: &[&str]) -> String {
    let evidence: Vec<&str> = evidence.iter().copied().filter(|e| !e.is_empty()).collect();
    if evidence.is_empty() {
        return text.to_string();
    }
    let set = window_set(&evidence, EVIDENCE_WINDOW);
    let mut out = match redact_pass(text, &set, EVIDENCE_WINDOW, REDACTION_MARKER) {
        Some(s) => s,
        None => return text.to_string(),
    };
    while let Some(next) = redact_pass(&out, &set, EVIDENCE_WINDOW, "") {
        out = next;
    }
    out
}

/// Runs a judged debate. Debaters see the evidence; the judge sees only the
/// caption and the debaters' redacted arguments.
pub async fn run_judged(
    pair: &ImageTextPair,
    evidence: Option<&EvidenceBundle>,
    config: &DebateConfig,
    rt: &DebateRuntime,
) -> Result<SessionResult, DebateError> {
    if config.strategy != DebateStrategy::Judged {
        return Err(DebateError::WrongStrategy {
            strategy: config.strategy,
            runner: "run_judged",
        });
    }
    let mut session = DebateSession::new(pair, evidence, config, rt)?;
    while !session.is_terminated() {
        session.step_round().await?;
    }

    let debate = session
        .transcript()
        .iter()
        .filter(|t| t.role == AgentRole::Debater)
        .map(|t| format!("{} (round {}):\n{}", t.agent_id, t.round_index, t.raw_response.trim()))
        .collect::<Vec<_>>()
        .join("\n\n");
    let evidence_texts: Vec<&str> = evidence.map(|e| e.texts().collect()).unwrap_or_default();
    let debate = redact_shared_windows(&debate, &evidence_texts);
    let prompt = render(TemplateId::Judge, &[pair.caption.as_str(), debate.as_str()]).expect("judge arity");

    let judge = session.indices(AgentRole::Judge)[0];
    let round = session.last_round().unwrap_or(0);
    session.ask(judge, round, prompt, false).await?;
    if session.transcript().last().map(|t| t.verdict()) == Some(Verdict::Unparseable) {
        session.flag(ResultFlag::JudgeUnparseable);
    }
    Ok(session.finish())
}
