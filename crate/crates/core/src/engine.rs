//! Discrete-event scheduler and labelled random streams.
//!
//! Virtual time is an `f64` in seconds. Internally every event is keyed on
//! the nanosecond tick it falls into plus a monotone insertion counter, so
//! two events less than a nanosecond apart are simultaneous and fire in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Virtual time resolution: events closer than this are simultaneous.
pub const TICK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event scheduled in the past: t={at} while clock={now}")]
    PastEvent { at: f64, now: f64 },
    #[error("non-finite event time {0}")]
    BadTime(f64),
    #[error("run_until({end}) is behind the clock ({now})")]
    RunBackwards { end: f64, now: f64 },
}

#[inline]
fn to_tick(t: f64) -> i64 {
    (t / TICK).round() as i64
}

/// Handle returned by [`Scheduler::schedule`]; used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<E> {
    tick: i64,
    seq: u64,
    time: f64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.tick == other.tick && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (tick, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .tick
            .cmp(&self.tick)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Priority queue of pending events plus the virtual clock.
pub struct Scheduler<E> {
    now: f64,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: 0.0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, at: f64, payload: E) -> Result<EventHandle, EngineError> {
        if !at.is_finite() {
            return Err(EngineError::BadTime(at));
        }
        let tick = to_tick(at);
        if tick < to_tick(self.now) {
            return Err(EngineError::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            tick,
            seq,
            time: at.max(self.now),
            payload,
        });
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` seconds after the current clock.
    pub fn schedule_in(&mut self, delay: f64, payload: E) -> Result<EventHandle, EngineError> {
        self.schedule(self.now + delay, payload)
    }

    /// Cancelling an already-fired or unknown handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_seq && self.heap.iter().any(|e| e.seq == handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pops the next live event with time ≤ `end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: f64) -> Option<(f64, E)> {
        let end_tick = to_tick(end);
        while let Some(top) = self.heap.peek() {
            if top.tick > end_tick {
                return None;
            }
            let entry = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.now = entry.time;
            return Some((entry.time, entry.payload));
        }
        None
    }

    /// Processes every event with time ≤ `end` in (time, insertion) order,
    /// then leaves the clock at `end`. Returns the number of events handled.
    pub fn run_until<F, X>(&mut self, end: f64, mut handler: F) -> Result<u64, X>
    where
        F: FnMut(&mut Self, f64, E) -> Result<(), X>,
        X: From<EngineError>,
    {
        if to_tick(end) < to_tick(self.now) {
            return Err(EngineError::RunBackwards { end, now: self.now }.into());
        }
        let mut processed = 0;
        while let Some((t, ev)) = self.pop_until(end) {
            handler(self, t, ev)?;
            processed += 1;
        }
        self.now = end;
        Ok(processed)
    }
}

/// Derives an independent RNG from a master seed and a text label.
///
/// The stream seed is the SHA-256 of the seed bytes followed by the label,
/// so adding a new consumer never shifts the draws of existing ones.
pub fn rng_stream(master_seed: u64, label: &str) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha12Rng::from_seed(digest)
}
