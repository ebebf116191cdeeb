use std::collections::HashSet;
use std::sync::{Arc, LazyLock};

use async_trait::async_trait;
use regex::Regex;
use tracing::{debug, warn};

use super::{
    AgentKind, AgentRole, AgentSpec, DebateConfig, DebateError, DebateStrategy, ResultFlag, SearchRecord,
    SessionResult, Turn, check_convergence, final_decision, final_round_turns,
};
use crate::backend::{ChatBackend, ChatMessage, ChatRequest, Usage};
use crate::clock::{Clock, SystemClock};
use crate::dataset::ImageTextPair;
use crate::evidence::{EvidenceBundle, SearchHit, TextSearch, text_search};
use crate::prompt::{AI_FRAMING_LINE, TemplateId, Verdict, extract_queries, parse_verdict, render};

/// Queries taken from one response; later QUERY lines are ignored.
pub const MAX_QUERIES_PER_TURN: usize = 2;
/// Search hits passed to the search summarizer per query.
const HITS_PER_QUERY: usize = 3;

/// Hooks for watching a session as it runs. All methods default to no-ops.
pub trait SessionObserver: Send + Sync {
    fn on_turn(&self, _turn: &Turn) {}
    fn on_awaiting_human(&self, _agent_id: &str, _round: u32, _prompt: &str) {}
    fn on_search(&self, _record: &SearchRecord) {}
    fn on_converged(&self, _round: u32, _verdict: Verdict) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl SessionObserver for NoopObserver {}

/// Source of human-authored turns.
#[async_trait]
pub trait HumanInput: Send + Sync {
    /// Waits for the human agent's reply to `prompt`. `None` means the slot
    /// abstains this round.
    async fn request_turn(&self, agent_id: &str, round: u32, prompt: &str) -> Option<String>;
}

/// Shared services a session runs against.
#[derive(Clone)]
pub struct DebateRuntime {
    pub backend: Arc<dyn ChatBackend>,
    pub clock: Arc<dyn Clock>,
    pub observer: Arc<dyn SessionObserver>,
    pub human: Option<Arc<dyn HumanInput>>,
    pub text_search: Option<Arc<dyn TextSearch>>,
}

impl DebateRuntime {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            clock: Arc::new(SystemClock),
            observer: Arc::new(NoopObserver),
            human: None,
            text_search: None,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn SessionObserver>) -> Self {
        self.observer = observer;
        self
    }

    pub fn with_human(mut self, human: Arc<dyn HumanInput>) -> Self {
        self.human = Some(human);
        self
    }

    pub fn with_text_search(mut self, provider: Arc<dyn TextSearch>) -> Self {
        self.text_search = Some(provider);
        self
    }
}

static AI_MENTIONS: LazyLock<[Regex; 2]> = LazyLock::new(|| {
    [
        Regex::new(r"(?i)\b(?:an?\s+)?(?:ai\s+)?language[\s-]*models?\b").expect("valid regex"),
        Regex::new(r"(?i)\b(?:an?\s+)?ai[\s-]*agents?\b").expect("valid regex"),
    ]
});

/// Rewrites self-descriptions such as "as an AI language model" so a peer
/// response can be relayed under human framing.
pub fn scrub_ai_mentions(text: &str) -> String {
    let mut out = text.to_string();
    for re in AI_MENTIONS.iter() {
        out = re.replace_all(&out, "someone").into_owned();
    }
    // Catch-all for forms the patterns above miss (e.g. glued to other
    // words). Each replacement shortens the text, so this terminates.
    loop {
        let lower = out.to_lowercase();
        let hit = ["language model", "ai agent"]
            .iter()
            .filter_map(|needle| lower.find(needle).map(|i| (i, needle.len())))
            .min();
        match hit {
            Some((i, len)) if out.is_char_boundary(i) && out.is_char_boundary(i + len) => {
                out.replace_range(i..i + len, "someone");
            }
            _ => break,
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub spec: AgentSpec,
    /// Private context window: only messages to or from this agent.
    pub history: Vec<ChatMessage>,
    pub current_verdict: Verdict,
    pub last_response: Option<String>,
}

/// One debate in progress.
pub struct DebateSession<'a> {
    pair: &'a ImageTextPair,
    evidence: Option<&'a EvidenceBundle>,
    config: &'a DebateConfig,
    rt: &'a DebateRuntime,
    agents: Vec<AgentState>,
    transcript: Vec<Turn>,
    usage: Vec<Usage>,
    searches: Vec<SearchRecord>,
    warnings: Vec<String>,
    flags: Vec<ResultFlag>,
    last_round: Option<u32>,
    terminated: bool,
    early_stop: bool,
}

impl<'a> DebateSession<'a> {
    pub fn new(
        pair: &'a ImageTextPair,
        evidence: Option<&'a EvidenceBundle>,
        config: &'a DebateConfig,
        rt: &'a DebateRuntime,
    ) -> Result<Self, DebateError> {
        config.validate()?;
        if config.agents.iter().any(AgentSpec::is_human) && rt.human.is_none() {
            return Err(DebateError::NoHumanInput);
        }
        if config.strategy == DebateStrategy::Disambiguation && rt.text_search.is_none() {
            return Err(DebateError::NoTextSearch);
        }
        let agents = config
            .agents
            .iter()
            .map(|spec| AgentState {
                spec: spec.clone(),
                history: Vec::new(),
                current_verdict: Verdict::Unparseable,
                last_response: None,
            })
            .collect();
        Ok(Self {
            pair,
            evidence,
            config,
            rt,
            agents,
            transcript: Vec::new(),
            usage: Vec::new(),
            searches: Vec::new(),
            warnings: Vec::new(),
            flags: Vec::new(),
            last_round: None,
            terminated: false,
            early_stop: false,
        })
    }

    pub fn config(&self) -> &DebateConfig {
        self.config
    }

    pub fn transcript(&self) -> &[Turn] {
        &self.transcript
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, id: &str) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.spec.id == id)
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn last_round(&self) -> Option<u32> {
        self.last_round
    }

    pub fn pair(&self) -> &ImageTextPair {
        self.pair
    }

    /// Evidence summary to show agents, if retrieval produced any.
    pub fn evidence_summary(&self) -> Option<&str> {
        if !self.config.evidence_enabled {
            return None;
        }
        self.evidence.and_then(EvidenceBundle::summary)
    }

    pub(crate) fn warn(&mut self, message: String) {
        warn!(%message, "debate warning");
        self.warnings.push(message);
    }

    pub(crate) fn flag(&mut self, flag: ResultFlag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    pub(crate) fn terminate(&mut self) {
        self.terminated = true;
    }

    pub(crate) fn set_early_stop(&mut self) {
        self.early_stop = true;
    }

    pub(crate) fn record_round(&mut self, round: u32) {
        self.last_round = Some(self.last_round.map_or(round, |r| r.max(round)));
    }

    pub(crate) fn indices(&self, role: AgentRole) -> Vec<usize> {
        (0..self.agents.len())
            .filter(|&i| self.agents[i].spec.role == role)
            .collect()
    }

    /// Opening prompt, with or without the evidence summary.
    pub fn initial_prompt(&self) -> String {
        let caption = self.pair.caption.as_str();
        match self.evidence_summary() {
            Some(summary) => render(TemplateId::InitialWithEvidence, &[summary, caption]),
            None => render(TemplateId::InitialNoEvidence, &[caption]),
        }
        .expect("initial template arity")
    }

    /// Sends `prompt` to agent `idx` (or waits for the human) and records
    /// the turn. The image rides along with each model agent's first
    /// message when `with_image` is set.
    pub(crate) async fn ask(
        &mut self,
        idx: usize,
        round: u32,
        prompt: String,
        with_image: bool,
    ) -> Result<(), DebateError> {
        let spec = self.agents[idx].spec.clone();
        let message = if with_image && spec.kind == AgentKind::Model && self.agents[idx].history.is_empty() {
            ChatMessage::user_with_image(self.pair.image.clone(), prompt.clone())
        } else {
            ChatMessage::user(prompt.clone())
        };
        self.agents[idx].history.push(message);

        let (raw, abstained) = match spec.kind {
            AgentKind::Human => {
                self.rt.observer.on_awaiting_human(&spec.id, round, &prompt);
                let human = self.rt.human.as_ref().ok_or(DebateError::NoHumanInput)?;
                match human.request_turn(&spec.id, round, &prompt).await {
                    Some(text) => (text, false),
                    None => {
                        self.flag(ResultFlag::HumanAbstained);
                        self.warn(format!("human agent `{}` abstained in round {round}", spec.id));
                        (String::new(), true)
                    }
                }
            }
            AgentKind::Model => {
                let mut request = ChatRequest::new(spec.model_id.clone(), self.agents[idx].history.clone());
                request.max_output_tokens = self.config.max_output_tokens;
                request.temperature = self.config.temperature;
                match self.rt.backend.complete(&request).await {
                    Ok(response) => {
                        self.usage.push(response.usage);
                        (response.text, false)
                    }
                    Err(source) => {
                        return Err(DebateError::Backend {
                            agent_id: spec.id.clone(),
                            round,
                            source,
                            partial: Box::new(self.snapshot()),
                        });
                    }
                }
            }
        };

        let remembered = self.relayed(&raw);
        let agent = &mut self.agents[idx];
        agent.history.push(ChatMessage::assistant(remembered));
        let parsed = parse_verdict(&raw);
        if !abstained {
            agent.current_verdict = parsed.verdict;
            agent.last_response = Some(raw.clone());
        }
        let turn = Turn {
            round_index: round,
            agent_id: spec.id.clone(),
            role: spec.role,
            kind: spec.kind,
            rendered_prompt: prompt,
            raw_response: raw,
            parsed,
            timestamp: self.rt.clock.now(),
            abstained,
        };
        debug!(agent = %turn.agent_id, round, verdict = %turn.parsed.verdict, "turn");
        self.rt.observer.on_turn(&turn);
        self.transcript.push(turn);
        Ok(())
    }

    /// Latest responses of every debater other than `idx`, as one slot.
    fn peer_slot(&self, idx: usize) -> String {
        let peers: Vec<(&str, &str)> = self
            .agents
            .iter()
            .enumerate()
            .filter(|(i, a)| *i != idx && matches!(a.spec.role, AgentRole::Debater))
            .filter_map(|(_, a)| Some((a.spec.id.as_str(), a.last_response.as_deref()?)))
            .collect();
        let slot = match peers.as_slice() {
            [(_, only)] if self.config.num_agents() <= 2 => only.to_string(),
            _ => peers
                .iter()
                .map(|(id, text)| format!("{id} said:\n{text}"))
                .collect::<Vec<_>>()
                .join("\n\n"),
        };
        self.relayed(&slot)
    }

    /// Text as it may be shown back to an agent: descriptions of the
    /// interlocutor as an AI are scrubbed unless the framing is disclosed.
    fn relayed(&self, text: &str) -> String {
        match self.config.strategy {
            DebateStrategy::AsyncAIFraming | DebateStrategy::Judged => text.to_string(),
            _ => scrub_ai_mentions(text),
        }
    }

    /// Judged debates only: the first debater argues YES, the second NO.
    fn stance(&self, idx: usize) -> Option<String> {
        if self.config.strategy != DebateStrategy::Judged {
            return None;
        }
        let template = if self.indices(AgentRole::Debater).iter().position(|&i| i == idx) == Some(1) {
            TemplateId::StanceNotMisinformation
        } else {
            TemplateId::StanceMisinformation
        };
        Some(render::<&str>(template, &[]).expect("stance arity"))
    }

    /// Prompt for debater `idx` in debate round `round` (>= 1).
    pub fn debate_prompt(&self, idx: usize, round: u32, augmentation: &str) -> String {
        let template = if round == 1 {
            TemplateId::RoundOne
        } else {
            TemplateId::LaterRound
        };
        let mut prompt = render(template, &[self.peer_slot(idx)]).expect("debate template arity");
        if self.config.strategy == DebateStrategy::AsyncAIFraming {
            prompt = format!("{AI_FRAMING_LINE}\n{prompt}");
        }
        self.decorate(idx, prompt, augmentation)
    }

    fn decorate(&self, idx: usize, body: String, augmentation: &str) -> String {
        let mut parts = Vec::with_capacity(4);
        if let Some(stance) = self.stance(idx) {
            parts.push(stance);
        }
        if !augmentation.is_empty() {
            parts.push(augmentation.to_string());
        }
        parts.push(body);
        if self.config.strategy == DebateStrategy::Disambiguation {
            parts.push(render::<&str>(TemplateId::QueryInstruction, &[]).expect("instruction arity"));
        }
        parts.join("\n\n")
    }

    fn debater_indices(&self) -> Vec<usize> {
        self.indices(AgentRole::Debater)
    }

    fn round_verdicts(&self) -> Vec<Verdict> {
        final_round_turns(&self.transcript, self.config)
            .iter()
            .map(|t| t.verdict())
            .collect()
    }

    /// Checks convergence over the latest round and terminates if reached.
    fn settle_round(&mut self, round: u32) {
        self.record_round(round);
        if self.config.strategy.is_open_debate() {
            let verdicts = self.round_verdicts();
            if check_convergence(&verdicts) {
                self.rt.observer.on_converged(round, verdicts[0]);
                self.terminate();
                return;
            }
        }
        if round >= self.config.max_rounds {
            self.terminate();
        }
    }

    /// Round 0: every debater forms an independent opinion.
    pub async fn opening_round(&mut self) -> Result<(), DebateError> {
        let initial = self.initial_prompt();
        for idx in self.debater_indices() {
            let prompt = self.decorate(idx, initial.clone(), "");
            self.ask(idx, 0, prompt, true).await?;
        }
        if self.config.strategy.is_open_debate() {
            let opinions: Vec<&Turn> = self
                .transcript
                .iter()
                .filter(|t| t.round_index == 0 && !t.abstained)
                .collect();
            if !opinions.is_empty() && opinions.iter().all(|t| !t.verdict().is_parseable()) {
                self.flag(ResultFlag::AllUnparseableAtStart);
                self.record_round(0);
                self.terminate();
                return Ok(());
            }
        }
        self.settle_round(0);
        Ok(())
    }

    /// One debate round: debaters act in roster order, each seeing the most
    /// recent responses of all the others.
    pub async fn step_round(&mut self) -> Result<(), DebateError> {
        assert!(!self.terminated, "step_round called on a terminated session");
        let round = match self.last_round {
            Some(r) => r + 1,
            None => return self.opening_round().await,
        };
        let augmentation = if self.config.strategy == DebateStrategy::Disambiguation {
            self.run_queries(round).await?
        } else {
            String::new()
        };
        for idx in self.debater_indices() {
            let prompt = self.debate_prompt(idx, round, &augmentation);
            self.ask(idx, round, prompt, true).await?;
        }
        self.settle_round(round);
        Ok(())
    }

    /// Executes the QUERY lines of round `round - 1` and returns the text
    /// block to append to every round-`round` prompt.
    async fn run_queries(&mut self, round: u32) -> Result<String, DebateError> {
        let Some(provider) = self.rt.text_search.clone() else {
            return Ok(String::new());
        };
        let mut seen = HashSet::new();
        let mut requests: Vec<(usize, String)> = Vec::new();
        for turn in self
            .transcript
            .iter()
            .filter(|t| t.round_index + 1 == round && !t.abstained)
        {
            let idx = self
                .agents
                .iter()
                .position(|a| a.spec.id == turn.agent_id)
                .expect("known agent");
            for query in extract_queries(&turn.raw_response)
                .into_iter()
                .take(MAX_QUERIES_PER_TURN)
            {
                if seen.insert(query.to_lowercase()) {
                    requests.push((idx, query));
                }
            }
        }

        let mut blocks = Vec::new();
        for (idx, query) in requests {
            let agent_id = self.agents[idx].spec.id.clone();
            let mut record = SearchRecord {
                round_index: round,
                agent_id: agent_id.clone(),
                query: query.clone(),
                hits: Vec::new(),
                summary: None,
                error: None,
            };
            match text_search(provider.as_ref(), &query).await {
                Err(e) => {
                    self.warn(format!("search for `{query}` failed: {e}"));
                    record.error = Some(e.to_string());
                }
                Ok(hits) if hits.is_empty() => {
                    blocks.push(
                        render(TemplateId::SearchResults, &[query.as_str(), "No results were found."]).expect("arity"),
                    );
                }
                Ok(hits) => {
                    record.hits = hits.into_iter().take(HITS_PER_QUERY).collect();
                    let summary = self.summarize_search(idx, round, &query, &record.hits).await?;
                    blocks.push(render(TemplateId::SearchResults, &[query.as_str(), summary.as_str()]).expect("arity"));
                    record.summary = Some(summary);
                }
            }
            self.rt.observer.on_search(&record);
            self.searches.push(record);
        }
        Ok(blocks.join("\n\n"))
    }

    async fn summarize_search(
        &mut self,
        idx: usize,
        round: u32,
        query: &str,
        hits: &[SearchHit],
    ) -> Result<String, DebateError> {
        let listing = hits
            .iter()
            .map(|h| format!("{}. {}: {} ({})", h.rank, h.title, h.snippet, h.page_url))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(TemplateId::SummarizeSearch, &[query, listing.as_str()]).expect("arity");
        let spec = &self.agents[idx].spec;
        let mut request = ChatRequest::new(spec.model_id.clone(), vec![ChatMessage::user(prompt)]);
        request.max_output_tokens = self.config.max_output_tokens;
        request.temperature = self.config.temperature;
        match self.rt.backend.complete(&request).await {
            Ok(response) => {
                self.usage.push(response.usage);
                Ok(response.text.trim().to_string())
            }
            Err(source) => Err(DebateError::Backend {
                agent_id: spec.id.clone(),
                round,
                source,
                partial: Box::new(self.snapshot()),
            }),
        }
    }

    /// Result view of the session so far.
    pub fn snapshot(&self) -> SessionResult {
        let (final_verdict, decision_rule) = final_decision(&self.transcript, self.config);
        let mut flags = self.flags.clone();
        if decision_rule == super::DecisionRule::Tiebreak && !flags.contains(&ResultFlag::Tiebreak) {
            flags.push(ResultFlag::Tiebreak);
        }
        let converged = match self.config.strategy {
            DebateStrategy::ActorSkeptic => self.early_stop,
            _ => check_convergence(&self.round_verdicts()),
        };
        SessionResult {
            final_verdict,
            explanation: self.explanation(final_verdict, decision_rule),
            converged,
            rounds_used: self.last_round.unwrap_or(0),
            transcript: self.transcript.clone(),
            decision_rule,
            flags,
            searches: self.searches.clone(),
            warnings: self.warnings.clone(),
            usage: self.usage.clone(),
        }
    }

    fn explanation(&self, verdict: Verdict, rule: super::DecisionRule) -> String {
        use super::DecisionRule::*;
        let by_role = |role: AgentRole| self.transcript.iter().rev().find(|t| t.role == role);
        let turn = match rule {
            Judge => by_role(AgentRole::Judge),
            ActorFinal => by_role(AgentRole::Actor),
            Convergence | Majority | Tiebreak => final_round_turns(&self.transcript, self.config)
                .into_iter()
                .find(|t| t.verdict() == verdict),
            Unresolved => self.transcript.iter().rev().find(|t| !t.abstained),
        };
        turn.map(|t| t.parsed.explanation.clone()).unwrap_or_default()
    }

    pub fn finish(self) -> SessionResult {
        self.snapshot()
    }

    /// Opening round, then debate rounds until convergence or the cap.
    pub async fn run_open(mut self) -> Result<SessionResult, DebateError> {
        while !self.terminated {
            self.step_round().await?;
        }
        Ok(self.finish())
    }
}

/// Runs a session with whichever strategy `config` names.
pub async fn run_session(
    pair: &ImageTextPair,
    evidence: Option<&EvidenceBundle>,
    config: &DebateConfig,
    rt: &DebateRuntime,
) -> Result<SessionResult, DebateError> {
    match config.strategy {
        DebateStrategy::Judged => super::run_judged(pair, evidence, config, rt).await,
        DebateStrategy::ActorSkeptic => super::run_actor_skeptic(pair, evidence, config, rt).await,
        _ => DebateSession::new(pair, evidence, config, rt)?.run_open().await,
    }
}

/// Debate where agents may emit `QUERY:` lines that trigger web searches
/// between rounds.
pub async fn run_disambiguation(
    pair: &ImageTextPair,
    evidence: Option<&EvidenceBundle>,
    config: &DebateConfig,
    rt: &DebateRuntime,
) -> Result<SessionResult, DebateError> {
    if config.strategy != DebateStrategy::Disambiguation {
        return Err(DebateError::WrongStrategy {
            strategy: config.strategy,
            runner: "run_disambiguation",
        });
    }
    DebateSession::new(pair, evidence, config, rt)?.run_open().await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scrub_removes_interlocutor_descriptions() {
        let text = "As an AI language model, I think the other AI agent is wrong. Language-models err. AI-agents too.";
        let out = scrub_ai_mentions(text);
        let lower = out.to_lowercase();
        assert!(
            !lower.contains("language model") && !lower.contains("ai agent"),
            "{out}"
        );
        assert!(out.starts_with("As someone, I think the other someone is wrong."));
    }

    #[test]
    fn scrub_catches_glued_forms() {
        let out = scrub_ai_mentions("xAI agentgent and LANGUAGE MODELLING");
        let lower = out.to_lowercase();
        assert!(
            !lower.contains("language model") && !lower.contains("ai agent"),
            "{out}"
        );
    }

    #[test]
    fn scrub_leaves_clean_text_alone() {
        let text = "The rally took place in Paris in 2019.";
        assert_eq!(scrub_ai_mentions(text), text);
    }
}
