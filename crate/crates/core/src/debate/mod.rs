//! Debate strategies, convergence detection and the final-decision rule.
//!
//! Every strategy runs on [`DebateSession`]: agents keep private chat
//! histories, act strictly one after another, and each reply is parsed with
//! [`parse_verdict`](crate::prompt::parse_verdict) into a [`Turn`].

mod actor_skeptic;
mod judged;
mod session;
mod transcript;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE, Usage};
use crate::evidence::SearchHit;
use crate::prompt::{ParsedTurn, Verdict};

pub use actor_skeptic::run_actor_skeptic;
pub use judged::{EVIDENCE_WINDOW, REDACTION_MARKER, redact_shared_windows, run_judged, shares_window};
pub use session::{
    DebateRuntime, DebateSession, HumanInput, MAX_QUERIES_PER_TURN, NoopObserver, SessionObserver, run_disambiguation,
    run_session, scrub_ai_mentions,
};
pub use transcript::{TRANSCRIPT_SCHEMA_VERSION, TranscriptError, TranscriptFile};

pub const DEFAULT_ROUNDS: u32 = 3;
/// Upper bound on configurable rounds, to keep cost bounded.
pub const MAX_ROUNDS: u32 = 20;
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebateStrategy {
    AsyncHumanFraming,
    #[serde(rename = "async_ai_framing")]
    AsyncAIFraming,
    Judged,
    ActorSkeptic,
    Disambiguation,
}

impl DebateStrategy {
    pub const ALL: [DebateStrategy; 5] = [
        DebateStrategy::AsyncHumanFraming,
        DebateStrategy::AsyncAIFraming,
        DebateStrategy::Judged,
        DebateStrategy::ActorSkeptic,
        DebateStrategy::Disambiguation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DebateStrategy::AsyncHumanFraming => "async_human_framing",
            DebateStrategy::AsyncAIFraming => "async_ai_framing",
            DebateStrategy::Judged => "judged",
            DebateStrategy::ActorSkeptic => "actor_skeptic",
            DebateStrategy::Disambiguation => "disambiguation",
        }
    }

    /// Strategies where every debater reasons freely and convergence can end
    /// the debate early.
    pub fn is_open_debate(self) -> bool {
        matches!(
            self,
            DebateStrategy::AsyncHumanFraming | DebateStrategy::AsyncAIFraming | DebateStrategy::Disambiguation
        )
    }
}

impl fmt::Display for DebateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DebateStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "human" | "async" | "async_human" => "async_human_framing",
            "ai" | "async_ai" => "async_ai_framing",
            "judge" => "judged",
            "actor_critic" => "actor_skeptic",
            other => other,
        };
        Self::ALL.into_iter().find(|s| s.name() == alias).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
            format!("unknown strategy `{s}` (expected one of: {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Debater,
    Judge,
    Actor,
    Skeptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Model,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub role: AgentRole,
    pub model_id: String,
    #[serde(default)]
    pub kind: AgentKind,
}

impl AgentSpec {
    pub fn model(id: impl Into<String>, role: AgentRole, model_id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            role,
            model_id: model_id.into(),
            kind: AgentKind::Model,
        }
    }

    pub fn human(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            role: AgentRole::Debater,
            model_id: "human".into(),
            kind: AgentKind::Human,
        }
    }

    pub fn is_human(&self) -> bool {
        self.kind == AgentKind::Human
    }
}

/// Debater ids used by the default rosters: `agent_a`, `agent_b`, ...
pub fn debater_id(index: usize) -> String {
    let mut n = index;
    let mut suffix = String::new();
    loop {
        suffix.insert(0, (b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    format!("agent_{suffix}")
}

pub const YES_SIDE: &str = "yes_side";
pub const NO_SIDE: &str = "no_side";
pub const JUDGE: &str = "judge";
pub const ACTOR: &str = "actor";
pub const SKEPTIC: &str = "skeptic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub strategy: DebateStrategy,
    /// Round cap `k`: debate rounds after the initial opinions.
    pub max_rounds: u32,
    pub evidence_enabled: bool,
    pub agents: Vec<AgentSpec>,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl DebateConfig {
    /// Default roster for `strategy`. `num_agents` counts debaters and only
    /// matters for the open-debate strategies.
    pub fn new(strategy: DebateStrategy, num_agents: usize, model_id: &str) -> Self {
        let agents = match strategy {
            DebateStrategy::Judged => vec![
                AgentSpec::model(YES_SIDE, AgentRole::Debater, model_id),
                AgentSpec::model(NO_SIDE, AgentRole::Debater, model_id),
                AgentSpec::model(JUDGE, AgentRole::Judge, model_id),
            ],
            DebateStrategy::ActorSkeptic => vec![
                AgentSpec::model(ACTOR, AgentRole::Actor, model_id),
                AgentSpec::model(SKEPTIC, AgentRole::Skeptic, model_id),
            ],
            _ => (0..num_agents)
                .map(|i| AgentSpec::model(debater_id(i), AgentRole::Debater, model_id))
                .collect(),
        };
        Self {
            strategy,
            max_rounds: DEFAULT_ROUNDS,
            evidence_enabled: true,
            agents,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn with_rounds(mut self, k: u32) -> Self {
        self.max_rounds = k;
        self
    }

    pub fn with_evidence(mut self, enabled: bool) -> Self {
        self.evidence_enabled = enabled;
        self
    }

    /// Single-agent, zero-round configuration: one opinion, no debate.
    pub fn single_agent(model_id: &str) -> Self {
        Self::new(DebateStrategy::AsyncHumanFraming, 1, model_id).with_rounds(0)
    }

    pub fn debaters(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents
            .iter()
            .filter(|a| matches!(a.role, AgentRole::Debater | AgentRole::Actor))
    }

    pub fn num_agents(&self) -> usize {
        self.debaters().count()
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Most backend calls a session with this config can make, counting one
    /// summarization call per executed disambiguation query.
    pub fn call_bound(&self) -> usize {
        let k = self.max_rounds as usize;
        let models = self.debaters().filter(|a| !a.is_human()).count();
        match self.strategy {
            DebateStrategy::ActorSkeptic => 1 + 2 * k,
            DebateStrategy::Judged => models * (1 + k) + 1,
            DebateStrategy::Disambiguation => models * (1 + k) + k * self.num_agents() * MAX_QUERIES_PER_TURN,
            _ => models * (1 + k),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |field: &str, message: String| {
            Err(ConfigError {
                field: field.to_string(),
                message,
            })
        };
        if self.max_rounds > MAX_ROUNDS {
            return fail(
                "max_rounds",
                format!("must be at most {MAX_ROUNDS}, got {}", self.max_rounds),
            );
        }
        if self.max_output_tokens == 0 {
            return fail("max_output_tokens", "must be positive".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail(
                "temperature",
                format!("must be a finite number >= 0, got {}", self.temperature),
            );
        }
        let mut seen = HashSet::new();
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.id.trim().is_empty() {
                return fail(&format!("agents[{i}].id"), "must not be empty".into());
            }
            if !seen.insert(agent.id.as_str()) {
                return fail(&format!("agents[{i}].id"), format!("duplicate agent id `{}`", agent.id));
            }
            if agent.model_id.trim().is_empty() {
                return fail(&format!("agents[{i}].model_id"), "must not be empty".into());
            }
            if agent.is_human() && (!self.strategy.is_open_debate() || agent.role != AgentRole::Debater) {
                return fail(
                    &format!("agents[{i}].kind"),
                    format!(
                        "human agents can only join open debates as debaters, not {}",
                        self.strategy
                    ),
                );
            }
        }
        let count = |role: AgentRole| self.agents.iter().filter(|a| a.role == role).count();
        let (debaters, judges, actors, skeptics) = (
            count(AgentRole::Debater),
            count(AgentRole::Judge),
            count(AgentRole::Actor),
            count(AgentRole::Skeptic),
        );
        match self.strategy {
            DebateStrategy::Judged => {
                if debaters != 2 || judges != 1 || actors + skeptics != 0 {
                    return fail(
                        "agents",
                        format!(
                            "judged debate needs 2 debaters and 1 judge, got {debaters} debater(s) and {judges} judge(s)"
                        ),
                    );
                }
            }
            DebateStrategy::ActorSkeptic => {
                if actors != 1 || skeptics != 1 || debaters + judges != 0 {
                    return fail("agents", "actor-skeptic needs exactly one actor and one skeptic".into());
                }
            }
            _ => {
                if judges + actors + skeptics != 0 {
                    return fail("agents", format!("{} uses debaters only", self.strategy));
                }
                match debaters {
                    0 => return fail("agents", "at least one agent is required".into()),
                    1 if self.max_rounds > 0 => {
                        return fail(
                            "max_rounds",
                            "single-agent mode has no debate; max_rounds must be 0".into(),
                        );
                    }
                    1 if self.agents[0].is_human() => {
                        return fail("agents", "single-agent mode needs a model agent".into());
                    }
                    _ => {}
                }
                if self.agents.iter().all(AgentSpec::is_human) {
                    return fail("agents", "at least one model agent is required".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("invalid config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    /// 0 for initial opinions, then 1..=k.
    pub round_index: u32,
    pub agent_id: String,
    pub role: AgentRole,
    #[serde(default)]
    pub kind: AgentKind,
    pub rendered_prompt: String,
    pub raw_response: String,
    pub parsed: ParsedTurn,
    pub timestamp: DateTime<Utc>,
    /// Set when a human slot timed out; such turns never count as votes.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub abstained: bool,
}

impl Turn {
    pub fn verdict(&self) -> Verdict {
        self.parsed.verdict
    }

    pub fn is_opinion(&self) -> bool {
        self.round_index == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    Convergence,
    Majority,
    Tiebreak,
    /// The judge's verdict (judged debate).
    Judge,
    /// The actor's last answer (actor-skeptic).
    ActorFinal,
    /// No parseable vote was available.
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFlag {
    Tiebreak,
    AllUnparseableAtStart,
    JudgeUnparseable,
    ActorUnparseable,
    HumanAbstained,
}

/// A disambiguation query and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    /// Round whose prompts the results were appended to.
    pub round_index: u32,
    pub agent_id: String,
    pub query: String,
    pub hits: Vec<SearchHit>,
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub final_verdict: Verdict,
    pub explanation: String,
    pub converged: bool,
    pub rounds_used: u32,
    pub transcript: Vec<Turn>,
    pub decision_rule: DecisionRule,
    #[serde(default)]
    pub flags: Vec<ResultFlag>,
    #[serde(default)]
    pub searches: Vec<SearchRecord>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Usage of every backend call made by the session, in call order.
    #[serde(default)]
    pub usage: Vec<Usage>,
}

impl SessionResult {
    pub fn flagged(&self, flag: ResultFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn backend_calls(&self) -> usize {
        self.usage.len()
    }

    pub fn latency_secs(&self) -> f64 {
        self.usage.iter().map(|u| u.latency_secs).sum()
    }

    /// Backend responses in call order, for replay through a scripted
    /// backend. Disambiguation summaries precede the round they augment.
    pub fn replay_script(&self) -> Vec<String> {
        let mut script = Vec::new();
        let mut pending: Vec<&SearchRecord> = self.searches.iter().filter(|s| s.summary.is_some()).collect();
        for turn in &self.transcript {
            let (due, later): (Vec<&SearchRecord>, Vec<&SearchRecord>) =
                pending.into_iter().partition(|s| s.round_index <= turn.round_index);
            script.extend(due.into_iter().filter_map(|s| s.summary.clone()));
            pending = later;
            if turn.kind == AgentKind::Model {
                script.push(turn.raw_response.clone());
            }
        }
        script
    }
}

#[derive(Debug, Error)]
pub enum DebateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{strategy} cannot be run by {runner}")]
    WrongStrategy {
        strategy: DebateStrategy,
        runner: &'static str,
    },
    #[error("agent `{agent_id}` failed in round {round}: {source}")]
    Backend {
        agent_id: String,
        round: u32,
        #[source]
        source: BackendError,
        /// Everything the session produced before the failure.
        partial: Box<SessionResult>,
    },
    #[error("human agents need a human input channel")]
    NoHumanInput,
    #[error("disambiguation requires a text search provider")]
    NoTextSearch,
}

impl DebateError {
    pub fn partial(&self) -> Option<&SessionResult> {
        match self {
            DebateError::Backend { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// True iff there is at least one verdict, all verdicts are equal, and none
/// is [`Verdict::Unparseable`].
pub fn check_convergence(verdicts: &[Verdict]) -> bool {
    match verdicts.first() {
        Some(first) => first.is_parseable() && verdicts.iter().all(|v| v == first),
        None => false,
    }
}

/// Majority over parseable votes; exact ties go to
/// [`Verdict::Misinformation`].
pub fn majority_vote(verdicts: &[Verdict]) -> (Verdict, DecisionRule) {
    let yes = verdicts.iter().filter(|v| **v == Verdict::Misinformation).count();
    let no = verdicts.iter().filter(|v| **v == Verdict::NotMisinformation).count();
    match yes.cmp(&no) {
        _ if yes + no == 0 => (Verdict::Unparseable, DecisionRule::Unresolved),
        std::cmp::Ordering::Greater => (Verdict::Misinformation, DecisionRule::Majority),
        std::cmp::Ordering::Less => (Verdict::NotMisinformation, DecisionRule::Majority),
        std::cmp::Ordering::Equal => (Verdict::Misinformation, DecisionRule::Tiebreak),
    }
}

/// Latest non-abstained turn of each voting agent in the last round any of
/// them spoke, in roster order.
pub fn final_round_turns<'a>(transcript: &'a [Turn], config: &DebateConfig) -> Vec<&'a Turn> {
    let voters: Vec<&str> = config.debaters().map(|a| a.id.as_str()).collect();
    let last_round = transcript
        .iter()
        .filter(|t| voters.contains(&t.agent_id.as_str()))
        .map(|t| t.round_index)
        .max();
    let Some(last_round) = last_round else {
        return Vec::new();
    };
    voters
        .iter()
        .filter_map(|id| {
            transcript
                .iter()
                .rev()
                .find(|t| t.agent_id == *id && t.round_index == last_round && !t.abstained)
        })
        .collect()
}

/// Final verdict and the rule that produced it.
pub fn final_decision(transcript: &[Turn], config: &DebateConfig) -> (Verdict, DecisionRule) {
    let last_of = |role: AgentRole| transcript.iter().rev().find(|t| t.role == role);
    match config.strategy {
        DebateStrategy::Judged => match last_of(AgentRole::Judge) {
            Some(t) => (t.verdict(), DecisionRule::Judge),
            None => (Verdict::Unparseable, DecisionRule::Unresolved),
        },
        DebateStrategy::ActorSkeptic => match last_of(AgentRole::Actor) {
            Some(t) => (t.verdict(), DecisionRule::ActorFinal),
            None => (Verdict::Unparseable, DecisionRule::Unresolved),
        },
        _ => {
            let verdicts: Vec<Verdict> = final_round_turns(transcript, config)
                .iter()
                .map(|t| t.verdict())
                .collect();
            if check_convergence(&verdicts) {
                (verdicts[0], DecisionRule::Convergence)
            } else {
                majority_vote(&verdicts)
            }
        }
    }
}
