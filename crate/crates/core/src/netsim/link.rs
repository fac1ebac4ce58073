//! Latency, jitter, and loss on the wire.

use super::Tick;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-hop link behaviour. Latency is uniform in
/// `[base_latency - jitter, base_latency + jitter]` (clamped at zero below)
/// and each send is dropped independently with `drop_probability`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub base_latency: Tick,
    pub jitter: Tick,
    pub drop_probability: f64,
}

impl LinkModel {
    pub fn sample_latency<R: Rng>(&self, rng: &mut R) -> Tick {
        if self.jitter == 0 {
            return self.base_latency;
        }
        let low = self.base_latency.saturating_sub(self.jitter);
        let high = self.base_latency + self.jitter;
        rng.random_range(low..=high)
    }
}

/// Counters kept by a lossy link. `sent` counts every send attempt,
/// including retransmissions, so `sent == delivered + dropped` always.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DeliveryStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub retransmitted: u64,
}

impl DeliveryStats {
    pub fn reconciles(&self) -> bool {
        self.sent == self.delivered + self.dropped && self.retransmitted <= self.sent
    }
}

/// A link that applies the loss model and keeps the books.
#[derive(Clone, Debug)]
pub struct LossyLink {
    pub model: LinkModel,
    pub stats: DeliveryStats,
}

impl LossyLink {
    pub fn new(model: LinkModel) -> LossyLink {
        LossyLink {
            model,
            stats: DeliveryStats::default(),
        }
    }

    /// Attempts one send. Returns the sampled latency if the message goes
    /// through, or `None` if the wire ate it. The drop draw is consumed
    /// before the latency draw, and only a successful send draws latency.
    pub fn send<R: Rng>(&mut self, rng: &mut R, retransmit: bool) -> Option<Tick> {
        self.stats.sent += 1;
        if retransmit {
            self.stats.retransmitted += 1;
        }
        let roll: f64 = rng.random();
        if roll < self.model.drop_probability {
            self.stats.dropped += 1;
            None
        } else {
            self.stats.delivered += 1;
            Some(self.model.sample_latency(rng))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::derive_stream;

    #[test]
    fn latency_stays_inside_the_jitter_window() {
        let model = LinkModel {
            base_latency: 10,
            jitter: 3,
            drop_probability: 0.0,
        };
        let mut rng = derive_stream(1, "netsim");
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let latency = model.sample_latency(&mut rng);
            assert!((7..=13).contains(&latency));
            seen.insert(latency);
        }
        // The whole window gets exercised.
        assert_eq!(seen.len(), 7);
    }

    #[test]
    fn zero_jitter_is_constant_latency() {
        let model = LinkModel {
            base_latency: 4,
            jitter: 0,
            drop_probability: 0.0,
        };
        let mut rng = derive_stream(2, "netsim");
        for _ in 0..32 {
            assert_eq!(model.sample_latency(&mut rng), 4);
        }
    }

    #[test]
    fn drop_free_link_delivers_everything() {
        let mut link = LossyLink::new(LinkModel {
            base_latency: 2,
            jitter: 1,
            drop_probability: 0.0,
        });
        let mut rng = derive_stream(3, "netsim");
        for _ in 0..500 {
            assert!(link.send(&mut rng, false).is_some());
        }
        assert_eq!(link.stats.sent, 500);
        assert_eq!(link.stats.delivered, 500);
        assert_eq!(link.stats.dropped, 0);
        assert!(link.stats.reconciles());
    }

    #[test]
    fn lossy_link_books_balance_and_loss_rate_is_plausible() {
        let mut link = LossyLink::new(LinkModel {
            base_latency: 2,
            jitter: 1,
            drop_probability: 0.25,
        });
        let mut rng = derive_stream(4, "netsim");
        for i in 0..4000 {
            link.send(&mut rng, i % 2 == 1);
        }
        assert_eq!(link.stats.sent, 4000);
        assert_eq!(link.stats.retransmitted, 2000);
        assert!(link.stats.reconciles());
        // 1000 expected drops; allow a generous band.
        assert!(link.stats.dropped > 800 && link.stats.dropped < 1200);
    }

    #[test]
    fn same_stream_reproduces_identical_outcomes() {
        let model = LinkModel {
            base_latency: 5,
            jitter: 2,
            drop_probability: 0.3,
        };
        let run = || {
            let mut link = LossyLink::new(model);
            let mut rng = derive_stream(9, "netsim");
            (0..100).map(|_| link.send(&mut rng, false)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
