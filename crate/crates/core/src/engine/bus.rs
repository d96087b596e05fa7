//! In-process message bus with exact communication accounting.
//!
//! Logical wire format, one float64 per counted value:
//!
//! ```text
//! Broadcast { t, beta: [f64; p+1] }                       coordinator -> worker
//! Summary   { t, shard_id, z: [f64; p+1], g: [f64; p+1] } worker -> coordinator
//! ```
//!
//! The coordinator (shard 0) computes its own summary locally; it is never
//! sent and never counted. A network transport can implement [`Transport`]
//! without touching the estimation loop.

use std::collections::BTreeMap;

use ndarray::Array1;

use crate::coeffs::CoefficientVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub t: usize,
    pub beta: CoefficientVector,
}

/// The two vectors a worker uploads per round.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSummary {
    pub shard_id: usize,
    /// `(1/n) Σ x̃_i ỹ_i` over the shard.
    pub z_nk: Array1<f64>,
    /// `D̂_{k,h} β̂_{t−1}`.
    pub g_k: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub t: usize,
    pub summary: WorkerSummary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundComm {
    pub t: usize,
    pub broadcast_values: usize,
    pub upload_values: usize,
    pub messages: usize,
}

impl RoundComm {
    pub fn total_values(&self) -> usize {
        self.broadcast_values + self.upload_values
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    rounds: BTreeMap<usize, RoundComm>,
}

impl CommLedger {
    fn round(&mut self, t: usize) -> &mut RoundComm {
        self.rounds.entry(t).or_insert(RoundComm {
            t,
            ..RoundComm::default()
        })
    }

    /// Per-round counts in round order.
    pub fn rounds(&self) -> Vec<RoundComm> {
        self.rounds.values().copied().collect()
    }

    pub fn broadcast_total(&self) -> usize {
        self.rounds.values().map(|r| r.broadcast_values).sum()
    }

    pub fn upload_total(&self) -> usize {
        self.rounds.values().map(|r| r.upload_values).sum()
    }

    pub fn total_values(&self) -> usize {
        self.broadcast_total() + self.upload_total()
    }

    pub fn total_messages(&self) -> usize {
        self.rounds.values().map(|r| r.messages).sum()
    }
}

/// Transmitted values a run over `m` machines should incur per round.
pub fn expected_round_values(m: usize, p: usize) -> (usize, usize) {
    let workers = m.saturating_sub(1);
    (workers * (p + 1), workers * 2 * (p + 1))
}

/// Checks the ledger against `T` rounds of one broadcast and one two-vector
/// upload per non-coordinator machine.
pub fn ledger_check(ledger: &CommLedger, m: usize, p: usize, rounds: usize) -> bool {
    let (down, up) = expected_round_values(m, p);
    let per_round = ledger.rounds();
    per_round.len() == rounds
        && per_round
            .iter()
            .enumerate()
            .all(|(i, r)| r.t == i + 1 && r.broadcast_values == down && r.upload_values == up)
        && ledger.total_values() == rounds * m.saturating_sub(1) * 3 * (p + 1)
}

pub trait Transport {
    fn broadcast(&mut self, msg: Broadcast, recipients: &[usize]);
    fn receive_broadcast(&mut self, worker: usize) -> Option<Broadcast>;
    fn upload(&mut self, msg: Summary);
    /// Drains uploaded summaries in arrival order.
    fn collect(&mut self) -> Vec<Summary>;
    fn ledger(&self) -> &CommLedger;
}

#[derive(Debug, Default)]
pub struct InProcessBus {
    mailboxes: BTreeMap<usize, Broadcast>,
    inbox: Vec<Summary>,
    ledger: CommLedger,
}

impl InProcessBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_ledger(self) -> CommLedger {
        self.ledger
    }
}

impl Transport for InProcessBus {
    fn broadcast(&mut self, msg: Broadcast, recipients: &[usize]) {
        let round = self.ledger.round(msg.t);
        round.broadcast_values += msg.beta.len() * recipients.len();
        round.messages += recipients.len();
        for &w in recipients {
            self.mailboxes.insert(w, msg.clone());
        }
    }

    fn receive_broadcast(&mut self, worker: usize) -> Option<Broadcast> {
        self.mailboxes.remove(&worker)
    }

    fn upload(&mut self, msg: Summary) {
        let round = self.ledger.round(msg.t);
        round.upload_values += msg.summary.z_nk.len() + msg.summary.g_k.len();
        round.messages += 1;
        self.inbox.push(msg);
    }

    fn collect(&mut self) -> Vec<Summary> {
        std::mem::take(&mut self.inbox)
    }

    fn ledger(&self) -> &CommLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger_for(m: usize, p: usize, rounds: usize) -> CommLedger {
        let mut bus = InProcessBus::new();
        let recipients: Vec<usize> = (1..m).collect();
        for t in 1..=rounds {
            bus.broadcast(
                Broadcast {
                    t,
                    beta: CoefficientVector::zeros(p + 1),
                },
                &recipients,
            );
            for &w in &recipients {
                assert!(bus.receive_broadcast(w).is_some());
                bus.upload(Summary {
                    t,
                    summary: WorkerSummary {
                        shard_id: w,
                        z_nk: Array1::zeros(p + 1),
                        g_k: Array1::zeros(p + 1),
                    },
                });
            }
            assert_eq!(bus.collect().len(), m - 1);
        }
        bus.into_ledger()
    }

    #[test]
    fn ledger_arithmetic() {
        let l = ledger_for(1, 7, 3);
        assert_eq!(l.total_values(), 0);
        assert!(ledger_check(&l, 1, 7, 3));

        let l = ledger_for(2, 1, 1);
        assert_eq!(l.upload_total(), 4);
        assert_eq!(l.broadcast_total(), 2);
        assert!(ledger_check(&l, 2, 1, 1));

        let l = ledger_for(5, 500, 10);
        assert_eq!(l.total_values(), 60_120);
        assert!(ledger_check(&l, 5, 500, 10));
        assert!(!ledger_check(&l, 5, 500, 9));
        assert!(!ledger_check(&l, 4, 500, 10));
    }
}
