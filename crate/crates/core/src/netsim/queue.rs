//! Seeded total-order event queue.

use super::Tick;
use std::collections::BTreeMap;
use thiserror::Error;

/// One scheduled occurrence. Events are totally ordered by
/// `(fire_time, sequence)`; the sequence is assigned at scheduling time, so
/// ties at the same tick fire in scheduling order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent<K> {
    pub fire_time: Tick,
    pub sequence: u64,
    pub kind: K,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("cannot schedule an event at {requested} before the current time {now}")]
pub struct TimeTravel {
    pub requested: Tick,
    pub now: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("stepped an empty event queue")]
pub struct EmptyQueue;

#[derive(Debug)]
pub struct EventQueue<K> {
    pending: BTreeMap<(Tick, u64), K>,
    next_sequence: u64,
    now: Tick,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            pending: BTreeMap::new(),
            next_sequence: 0,
            now: 0,
        }
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current simulation time: the fire time of the last stepped event.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Fire time of the next event, if any, without consuming it.
    pub fn peek_time(&self) -> Option<Tick> {
        self.pending.keys().next().map(|&(time, _)| time)
    }

    /// Schedules an event at or after the current time and returns its
    /// sequence number.
    pub fn schedule(&mut self, fire_time: Tick, kind: K) -> Result<u64, TimeTravel> {
        if fire_time < self.now {
            return Err(TimeTravel {
                requested: fire_time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.pending.insert((fire_time, sequence), kind);
        Ok(sequence)
    }

    /// Pops the earliest event and advances the clock to it. The clock
    /// never moves backwards.
    pub fn step(&mut self) -> Result<SimEvent<K>, EmptyQueue> {
        let ((fire_time, sequence), kind) = self.pending.pop_first().ok_or(EmptyQueue)?;
        self.now = fire_time;
        Ok(SimEvent {
            fire_time,
            sequence,
            kind,
        })
    }
}
