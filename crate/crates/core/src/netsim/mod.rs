//! Discrete-event network simulation.
//!
//! A single seeded event queue drives everything that happens in a run:
//! message deliveries, agent wake-ups, mining flushes, contract deadlines,
//! and quorum votes. Links between nodes add latency and can drop block
//! broadcasts, which are retried with exponential backoff. All randomness
//! comes from per-subsystem ChaCha streams derived from the master seed,
//! so one subsystem's draws never perturb another's.

mod link;
mod peer;
mod queue;
mod rng;

pub use link::{DeliveryStats, LinkModel, LossyLink};
pub use peer::{PeerHonesty, PeerNode, ReplicaError};
pub use queue::{EmptyQueue, EventQueue, SimEvent, TimeTravel};
pub use rng::derive_stream;

/// Simulation time in ticks. A scenario assigns wall-clock meaning to a
/// tick for reporting; the engine only ever compares and adds them.
pub type Tick = u64;

/// Block broadcast retries give up after this many attempts per peer.
pub const MAX_SEND_ATTEMPTS: u32 = 8;

/// Backoff delay before retransmission attempt `attempt` (1-based counting
/// of the attempt that just failed). Doubles each time from `base`.
pub fn backoff_delay(base: Tick, attempt: u32) -> Tick {
    base.saturating_mul(1u64 << attempt.min(16))
}
