//! Injectable time and identifier sources.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::types::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock: every reading advances by `step` milliseconds.
#[derive(Debug)]
pub struct ManualClock {
    next: AtomicU64,
    step: u64,
}

impl ManualClock {
    pub fn new(start: Timestamp, step: u64) -> Self {
        ManualClock { next: AtomicU64::new(start), step }
    }

    pub fn set(&self, t: Timestamp) {
        self.next.store(t, Ordering::SeqCst);
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        ManualClock::new(1_700_000_000_000, 1)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}

/// Source of 128-bit identifiers rendered as 32 lowercase hex characters.
pub struct IdSource {
    rng: Mutex<ChaCha20Rng>,
}

impl IdSource {
    pub fn from_entropy() -> Self {
        IdSource { rng: Mutex::new(ChaCha20Rng::from_entropy()) }
    }

    pub fn seeded(seed: u64) -> Self {
        IdSource { rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)) }
    }

    pub fn next_id(&self) -> String {
        let bits: u128 = self.rng.lock().unwrap_or_else(|e| e.into_inner()).gen();
        format!("{bits:032x}")
    }
}

impl std::fmt::Debug for IdSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("IdSource")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_32_hex() {
        let ids = IdSource::seeded(7);
        let a = ids.next_id();
        assert_eq!(a.len(), 32);
        assert!(a.bytes().all(|b| b.is_ascii_hexdigit()));
        assert_ne!(a, ids.next_id());
        assert_eq!(IdSource::seeded(7).next_id(), a);
    }

    #[test]
    fn manual_clock_steps() {
        let c = ManualClock::new(10, 5);
        assert_eq!(c.now(), 10);
        assert_eq!(c.now(), 15);
    }
}
