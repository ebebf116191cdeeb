//! HTTP service for live detection sessions: create a session, stream its
//! debate as server-sent events, join as a human debater, and run the
//! answer / reveal / re-answer user-study workflow.

pub mod api;
pub mod events;
pub mod hub;
pub mod store;
pub mod study;

pub use api::{AppState, CreateSession, Engines, ServiceConfig, SessionOptions, SessionStatus, router, serve};
pub use events::{EventKind, EventLog, SessionEvent, replay};
pub use store::ENV_STATE_DIR;
