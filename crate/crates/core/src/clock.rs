//! Time source for transcripts and provenance.
//!
//! Sessions stamp every turn. Tests and reproducible CLI runs swap in a
//! [`LogicalClock`] so that persisted transcripts are byte-identical across
//! runs.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that advances one second per reading.
#[derive(Debug)]
pub struct LogicalClock {
    next: AtomicI64,
}

impl LogicalClock {
    pub fn starting_at(epoch_secs: i64) -> Self {
        Self {
            next: AtomicI64::new(epoch_secs),
        }
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.next.fetch_add(1, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0)
            .single()
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH)
    }
}
