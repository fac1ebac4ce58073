//! Topic and service routing between nodes.
//!
//! The bus mirrors the two interaction styles of a robot middleware:
//! fire-and-forget topics with fan-out to every subscriber, and
//! request/reply services with a timeout. It owns the routing tables and
//! the per-(publisher, subscriber) FIFO bookkeeping; the event queue does
//! the actual delivery. Every routed hop gets a fresh latency sample, but a
//! later message between the same pair is never scheduled before an earlier
//! one, so per-pair delivery order equals publish order.

use crate::ledger::AccountId;
use crate::netsim::Tick;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("unknown service {0}")]
    UnknownService(String),
}

/// A scheduled hand-off: deliver to `to` at `at`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Planned {
    pub to: AccountId,
    pub at: Tick,
}

#[derive(Debug, Default)]
pub struct MessageBus {
    topics: BTreeMap<String, Vec<AccountId>>,
    services: BTreeMap<String, AccountId>,
    fifo_floor: BTreeMap<(AccountId, AccountId), Tick>,
    next_request_id: u64,
}

impl MessageBus {
    pub fn new() -> MessageBus {
        MessageBus::default()
    }

    /// Creating an existing topic is a no-op; subscribers are kept.
    pub fn create_topic(&mut self, name: &str) {
        self.topics.entry(name.to_owned()).or_default();
    }

    pub fn subscribe(&mut self, topic: &str, subscriber: AccountId) -> Result<(), BusError> {
        let subs = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_owned()))?;
        if !subs.contains(&subscriber) {
            subs.push(subscriber);
        }
        Ok(())
    }

    pub fn subscribers(&self, topic: &str) -> Result<&[AccountId], BusError> {
        self.topics
            .get(topic)
            .map(Vec::as_slice)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_owned()))
    }

    /// Registers (or replaces) the single responder behind a service name.
    pub fn register_service(&mut self, name: &str, responder: AccountId) {
        self.services.insert(name.to_owned(), responder);
    }

    pub fn responder(&self, service: &str) -> Result<&AccountId, BusError> {
        self.services
            .get(service)
            .ok_or_else(|| BusError::UnknownService(service.to_owned()))
    }

    /// Fresh id for correlating a request with its reply or timeout.
    pub fn next_request_id(&mut self) -> u64 {
        let id = self.next_request_id;
        self.next_request_id += 1;
        id
    }

    /// Plans delivery of one publication to every current subscriber.
    /// Exactly one delivery per subscriber; each gets its own latency
    /// sample, raised to the pair's FIFO floor.
    pub fn publish(
        &mut self,
        topic: &str,
        from: &AccountId,
        now: Tick,
        latency: &mut dyn FnMut() -> Tick,
    ) -> Result<Vec<Planned>, BusError> {
        let subs = self
            .topics
            .get(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_owned()))?
            .clone();
        let planned = subs
            .into_iter()
            .map(|to| {
                let at = self.plan_hop(from, &to, now, latency());
                Planned { to, at }
            })
            .collect();
        Ok(planned)
    }

    /// Plans one direct hop (request leg, reply leg, or notice), respecting
    /// the pair's FIFO floor.
    pub fn unicast(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        now: Tick,
        latency: Tick,
    ) -> Planned {
        let at = self.plan_hop(from, to, now, latency);
        Planned {
            to: to.clone(),
            at,
        }
    }

    fn plan_hop(&mut self, from: &AccountId, to: &AccountId, now: Tick, latency: Tick) -> Tick {
        let key = (from.clone(), to.clone());
        let floor = self.fifo_floor.get(&key).copied().unwrap_or(0);
        let at = (now + latency).max(floor);
        self.fifo_floor.insert(key, at);
        at
    }
}
