//! Per-session event logs and replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use ooc_core::debate::{SessionResult, Turn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EvidenceReady,
    /// Round-0 turn.
    Opinion,
    /// Turn in a debate round, or a judge/skeptic turn.
    Turn,
    AwaitingHuman,
    Converged,
    Verdict,
    Error,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::EvidenceReady => "evidence_ready",
            EventKind::Opinion => "opinion",
            EventKind::Turn => "turn",
            EventKind::AwaitingHuman => "awaiting_human",
            EventKind::Converged => "converged",
            EventKind::Verdict => "verdict",
            EventKind::Error => "error",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Verdict | EventKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Starts at 1 and increases by one per event.
    pub seq: u64,
    pub session_id: String,
    pub kind: EventKind,
    pub at: DateTime<Utc>,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot write event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("session already ended")]
    Closed,
}

/// Append-only event log with one writer and any number of readers.
/// Readers wait on a watch channel carrying the latest sequence number.
pub struct EventLog {
    session_id: String,
    events: Mutex<Vec<SessionEvent>>,
    file: Option<Mutex<File>>,
    notify: watch::Sender<u64>,
}

impl EventLog {
    pub fn in_memory(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            events: Mutex::new(Vec::new()),
            file: None,
            notify: watch::channel(0).0,
        }
    }

    /// Opens (or creates) a jsonl-backed log, loading any existing events.
    pub fn open(session_id: impl Into<String>, path: &Path) -> Result<Self, LogError> {
        let session_id = session_id.into();
        let events = if path.exists() { read_log(path)? } else { Vec::new() };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let last = events.last().map_or(0, |e| e.seq);
        Ok(Self {
            session_id,
            events: Mutex::new(events),
            file: Some(Mutex::new(file)),
            notify: watch::channel(last).0,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn append(&self, kind: EventKind, payload: Value) -> Result<SessionEvent, LogError> {
        let mut events = self.events.lock().expect("event log poisoned");
        if events.last().is_some_and(|e| e.kind.is_terminal()) {
            return Err(LogError::Closed);
        }
        let event = SessionEvent {
            seq: events.last().map_or(1, |e| e.seq + 1),
            session_id: self.session_id.clone(),
            kind,
            at: Utc::now(),
            payload,
        };
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            let mut file = file.lock().expect("event file poisoned");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| LogError::Io {
                    path: self.session_id.clone(),
                    source,
                })?;
        }
        events.push(event.clone());
        self.notify.send_replace(event.seq);
        Ok(event)
    }

    /// Events with sequence number greater than `after`.
    pub fn since(&self, after: u64) -> Vec<SessionEvent> {
        let events = self.events.lock().expect("event log poisoned");
        events.iter().filter(|e| e.seq > after).cloned().collect()
    }

    pub fn snapshot(&self) -> Vec<SessionEvent> {
        self.since(0)
    }

    pub fn last_seq(&self) -> u64 {
        *self.notify.borrow()
    }

    pub fn is_closed(&self) -> bool {
        let events = self.events.lock().expect("event log poisoned");
        events.last().is_some_and(|e| e.kind.is_terminal())
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.notify.subscribe()
    }
}

pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut events: Vec<SessionEvent> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| LogError::Corrupt {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let event: SessionEvent = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let expected = events.last().map_or(1, |e| e.seq + 1);
        if event.seq != expected {
            return Err(corrupt(format!("sequence {} where {expected} was expected", event.seq)));
        }
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event {seq}: {message}")]
    Malformed { seq: u64, message: String },
    #[error("event log has no verdict")]
    Unfinished,
    #[error("session ended with an error: {0}")]
    Failed(String),
    #[error("verdict transcript disagrees with the streamed turns at index {0}")]
    Diverged(usize),
}

/// Rebuilds a session's result from its event log.
///
/// Turns are collected from `opinion` and `turn` events in sequence order and
/// checked against the transcript carried by the verdict event, so a log
/// whose stream and verdict disagree is rejected rather than trusted.
pub fn replay(events: &[SessionEvent]) -> Result<SessionResult, ReplayError> {
    let mut turns: Vec<Turn> = Vec::new();
    let mut previous = 0;
    for event in events {
        let malformed = |message: String| ReplayError::Malformed {
            seq: event.seq,
            message,
        };
        if event.seq <= previous {
            return Err(malformed(format!("out of order after {previous}")));
        }
        previous = event.seq;
        match event.kind {
            EventKind::Opinion | EventKind::Turn => {
                let turn: Turn = serde_json::from_value(event.payload.clone()).map_err(|e| malformed(e.to_string()))?;
                turns.push(turn);
            }
            EventKind::Verdict => {
                let mut result: SessionResult =
                    serde_json::from_value(event.payload.clone()).map_err(|e| malformed(e.to_string()))?;
                if let Some(i) =
                    (0..turns.len().max(result.transcript.len())).find(|&i| turns.get(i) != result.transcript.get(i))
                {
                    return Err(ReplayError::Diverged(i));
                }
                result.transcript = turns;
                return Ok(result);
            }
            EventKind::Error => {
                let message = event
                    .payload
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown error");
                return Err(ReplayError::Failed(message.to_string()));
            }
            _ => {}
        }
    }
    Err(ReplayError::Unfinished)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sequence_numbers_start_at_one_and_increase() {
        let log = EventLog::in_memory("s1");
        for _ in 0..3 {
            log.append(EventKind::Turn, json!({})).unwrap();
        }
        let seqs: Vec<u64> = log.snapshot().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, [1, 2, 3]);
        assert_eq!(log.last_seq(), 3);
        assert_eq!(log.since(2).len(), 1);
    }

    #[test]
    fn terminal_event_closes_the_log() {
        let log = EventLog::in_memory("s1");
        log.append(EventKind::Error, json!({"message": "boom"})).unwrap();
        assert!(log.is_closed());
        assert!(matches!(log.append(EventKind::Turn, json!({})), Err(LogError::Closed)));
    }

    #[test]
    fn file_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let log = EventLog::open("s1", &path).unwrap();
            log.append(EventKind::EvidenceReady, json!({"enabled": false})).unwrap();
            log.append(EventKind::Turn, json!({"x": 1})).unwrap();
        }
        let log = EventLog::open("s1", &path).unwrap();
        assert_eq!(log.last_seq(), 2);
        assert_eq!(log.append(EventKind::Turn, json!({})).unwrap().seq, 3);
        assert_eq!(read_log(&path).unwrap().len(), 3);
    }

    #[test]
    fn gaps_in_a_log_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let event = |seq| SessionEvent {
            seq,
            session_id: "s".into(),
            kind: EventKind::Turn,
            at: Utc::now(),
            payload: json!({}),
        };
        let body = [event(1), event(3)]
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect::<String>();
        std::fs::write(&path, body).unwrap();
        assert!(matches!(read_log(&path), Err(LogError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn replay_without_verdict_is_unfinished() {
        assert_eq!(replay(&[]), Err(ReplayError::Unfinished));
    }
}
