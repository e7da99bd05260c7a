//! Partial-synchrony delay model.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// How messages sent before GST are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreGstPolicy {
    /// Every message arrives at exactly GST + Δ.
    AdversarialHold,
    /// Uniform delay in `[δmin, max]`, still capped at GST + Δ.
    RandomUpTo(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayModel {
    /// `None` means GST never arrives.
    pub gst: Option<u64>,
    /// Known bound Δ.
    pub delta_cap: u64,
    pub delta_min: u64,
    pub delta_max: u64,
    /// Time units per payload unit.
    pub payload_cost: u64,
    pub pre_gst: PreGstPolicy,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            gst: Some(0),
            delta_cap: 1000,
            delta_min: 10,
            delta_max: 10,
            payload_cost: 0,
            pre_gst: PreGstPolicy::AdversarialHold,
        }
    }
}

impl DelayModel {
    pub fn is_synchronous_at(&self, time: u64) -> bool {
        self.gst.is_some_and(|g| time >= g)
    }

    /// Latest delivery time the model permits for a message sent at
    /// `send`; `None` while GST is infinite.
    pub fn bound(&self, send: u64, payload_units: u64) -> Option<u64> {
        let g = self.gst?;
        Some(send.max(g) + self.delta_cap + payload_units * self.payload_cost)
    }

    /// Delivery time for one message. `None` means the message is held
    /// forever (pre-GST with GST at infinity under `AdversarialHold`).
    pub fn delivery_time<R: Rng>(&self, send: u64, payload_units: u64, rng: &mut R) -> Option<u64> {
        let transfer = payload_units * self.payload_cost;
        if self.is_synchronous_at(send) {
            let d = rng.gen_range(self.delta_min..=self.delta_max);
            return Some(send + d + transfer);
        }
        let bound = self.bound(send, payload_units);
        match self.pre_gst {
            PreGstPolicy::AdversarialHold => bound,
            PreGstPolicy::RandomUpTo(max) => {
                let hi = max.max(self.delta_min);
                let d = rng.gen_range(self.delta_min..=hi);
                let t = send + d + transfer;
                Some(bound.map_or(t, |b| t.min(b)))
            }
        }
    }

    /// The latest legal instant, used by the `MaxDelay` strategy.
    pub fn latest(&self, send: u64, payload_units: u64) -> Option<u64> {
        self.bound(send, payload_units)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn post_gst_fixed_delay() {
        let m = DelayModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.delivery_time(0, 0, &mut rng), Some(10));
    }

    #[test]
    fn adversarial_hold_delivers_at_gst_plus_delta() {
        let m = DelayModel {
            gst: Some(500),
            delta_cap: 100,
            ..DelayModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.delivery_time(0, 0, &mut rng), Some(600));
    }

    #[test]
    fn payload_adds_transfer_time() {
        let m = DelayModel {
            payload_cost: 1,
            ..DelayModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.delivery_time(0, 50, &mut rng), Some(60));
    }

    #[test]
    fn random_pre_gst_respects_cap() {
        let m = DelayModel {
            gst: Some(300),
            delta_cap: 100,
            delta_min: 1,
            delta_max: 50,
            payload_cost: 0,
            pre_gst: PreGstPolicy::RandomUpTo(10_000),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for send in 0..300 {
            let t = m.delivery_time(send, 0, &mut rng).unwrap();
            assert!(t > send && t <= 400);
        }
    }

    #[test]
    fn infinite_gst_holds_forever() {
        let m = DelayModel {
            gst: None,
            ..DelayModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.delivery_time(5, 0, &mut rng), None);
        let r = DelayModel {
            pre_gst: PreGstPolicy::RandomUpTo(70),
            ..m
        };
        let t = r.delivery_time(5, 0, &mut rng).unwrap();
        assert!((15..=75).contains(&t));
    }
}
