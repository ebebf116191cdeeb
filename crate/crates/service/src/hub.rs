//! Bridge between a running debate and the outside world: turns the
//! session's callbacks into events and routes posted human turns into the
//! waiting slot.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use ooc_core::debate::{AgentKind, HumanInput, SearchRecord, SessionObserver, Turn};
use ooc_core::prompt::Verdict;
use serde_json::{Value, json};
use thiserror::Error;
use tokio::sync::oneshot;
use tracing::warn;

use crate::events::{EventKind, EventLog};

pub const DEFAULT_HUMAN_TIMEOUT: Duration = Duration::from_secs(600);
/// How long a posted turn waits for the session to acknowledge it.
const ACK_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TurnError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}` is a model agent")]
    NotHuman(String),
    #[error("out of turn: {expected}")]
    OutOfTurn { expected: String },
    #[error("session has terminated")]
    Terminated,
    #[error("the turn slot closed before the text was accepted")]
    SlotClosed,
}

struct Pending {
    agent_id: String,
    round: u32,
    reply: oneshot::Sender<String>,
}

#[derive(Default)]
struct HubState {
    pending: Option<Pending>,
    ack: Option<(String, oneshot::Sender<Turn>)>,
    last_turn: Option<(u32, String)>,
    terminated: bool,
}

pub struct SessionHub {
    log: Arc<EventLog>,
    /// Agents in speaking order.
    roster: Vec<(String, AgentKind)>,
    human_timeout: Duration,
    state: Mutex<HubState>,
}

impl SessionHub {
    pub fn new(log: Arc<EventLog>, roster: Vec<(String, AgentKind)>, human_timeout: Duration) -> Self {
        Self {
            log,
            roster,
            human_timeout,
            state: Mutex::new(HubState::default()),
        }
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn emit(&self, kind: EventKind, payload: Value) {
        if let Err(e) = self.log.append(kind, payload) {
            warn!(session = self.log.session_id(), "dropping {} event: {e}", kind.name());
        }
    }

    /// Closes the human slot; later submissions fail with `Terminated`.
    pub fn terminate(&self) {
        let mut state = self.state.lock().expect("hub poisoned");
        state.terminated = true;
        state.pending = None;
        state.ack = None;
    }

    /// The human slot currently waiting for input, if any.
    pub fn awaiting(&self) -> Option<(String, u32)> {
        let state = self.state.lock().expect("hub poisoned");
        state.pending.as_ref().map(|p| (p.agent_id.clone(), p.round))
    }

    fn whose_turn(&self, state: &HubState) -> String {
        let next = match &state.last_turn {
            None => self.roster.first(),
            Some((_, last)) => {
                let pos = self.roster.iter().position(|(id, _)| id == last);
                pos.map(|i| &self.roster[(i + 1) % self.roster.len()])
            }
        };
        match next {
            Some((id, AgentKind::Model)) => format!("it is model agent `{id}`'s turn"),
            Some((id, AgentKind::Human)) => format!("it is `{id}`'s turn"),
            None => "no agent is due to speak".into(),
        }
    }

    /// Hands `text` to the waiting slot and returns the resulting turn.
    pub async fn submit(&self, agent_id: &str, text: String) -> Result<Turn, TurnError> {
        let ack = {
            let mut state = self.state.lock().expect("hub poisoned");
            if state.terminated {
                return Err(TurnError::Terminated);
            }
            match self.roster.iter().find(|(id, _)| id == agent_id) {
                None => return Err(TurnError::UnknownAgent(agent_id.to_string())),
                Some((_, AgentKind::Model)) => return Err(TurnError::NotHuman(agent_id.to_string())),
                Some(_) => {}
            }
            let expected = match &state.pending {
                Some(p) if p.agent_id == agent_id => None,
                Some(p) => Some(format!("it is `{}`'s turn (round {})", p.agent_id, p.round)),
                None => Some(self.whose_turn(&state)),
            };
            if let Some(expected) = expected {
                return Err(TurnError::OutOfTurn { expected });
            }
            let pending = state.pending.take().expect("checked above");
            let (tx, rx) = oneshot::channel();
            state.ack = Some((agent_id.to_string(), tx));
            if pending.reply.send(text).is_err() {
                state.ack = None;
                return Err(TurnError::SlotClosed);
            }
            rx
        };
        match tokio::time::timeout(ACK_TIMEOUT, ack).await {
            Ok(Ok(turn)) => Ok(turn),
            _ => Err(TurnError::SlotClosed),
        }
    }
}

impl SessionObserver for SessionHub {
    fn on_turn(&self, turn: &Turn) {
        let kind = if turn.is_opinion() {
            EventKind::Opinion
        } else {
            EventKind::Turn
        };
        self.emit(kind, serde_json::to_value(turn).expect("turn serializes"));
        let mut state = self.state.lock().expect("hub poisoned");
        state.last_turn = Some((turn.round_index, turn.agent_id.clone()));
        if state.ack.as_ref().is_some_and(|(id, _)| *id == turn.agent_id) {
            let (_, tx) = state.ack.take().expect("checked above");
            let _ = tx.send(turn.clone());
        }
    }

    fn on_awaiting_human(&self, agent_id: &str, round: u32, prompt: &str) {
        self.emit(
            EventKind::AwaitingHuman,
            json!({ "agent_id": agent_id, "round": round, "prompt": prompt }),
        );
    }

    fn on_search(&self, record: &SearchRecord) {
        tracing::debug!(session = self.log.session_id(), query = record.query, "search");
    }

    fn on_converged(&self, round: u32, verdict: Verdict) {
        self.emit(EventKind::Converged, json!({ "round": round, "verdict": verdict }));
    }
}

#[async_trait]
impl HumanInput for SessionHub {
    async fn request_turn(&self, agent_id: &str, round: u32, _prompt: &str) -> Option<String> {
        let rx = {
            let mut state = self.state.lock().expect("hub poisoned");
            if state.terminated {
                return None;
            }
            let (tx, rx) = oneshot::channel();
            state.pending = Some(Pending {
                agent_id: agent_id.to_string(),
                round,
                reply: tx,
            });
            rx
        };
        match tokio::time::timeout(self.human_timeout, rx).await {
            Ok(Ok(text)) => Some(text),
            _ => {
                let mut state = self.state.lock().expect("hub poisoned");
                if state.pending.as_ref().is_some_and(|p| p.agent_id == agent_id) {
                    state.pending = None;
                }
                None
            }
        }
    }
}
