//! Synchronous network with adversarial scheduling.
//!
//! Honest broadcasts fan out into one envelope per recipient, due within
//! `Δ` rounds. The adversary may retime any fresh honest envelope inside its
//! `[sent+1, sent+Δ]` window, per recipient, after seeing the payload, and
//! may inject its own envelopes under corrupt validator claims or arbitrary
//! client labels. Deliveries land in per-party inboxes; a party reads its
//! inbox in the round it is awake, so everything that arrived while it slept
//! carries the wake round as its receipt stamp.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::messages::{Payload, Received};
use crate::trace::Origin;
use crate::types::{PartyId, Round, ValidatorId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("delivery round {deliver} outside [{lo}, {hi}]")]
    IllegalDelivery { deliver: Round, lo: Round, hi: Round },
    #[error("adversary cannot claim honest validator v{0}")]
    IllegalClaim(ValidatorId),
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub claim: PartyId,
    pub origin: Origin,
    pub to: PartyId,
    pub sent_at: Round,
    pub deliver_at: Round,
    pub payload: Payload,
}

#[derive(Debug, Default)]
pub struct Network {
    in_flight: Vec<Envelope>,
    inboxes: BTreeMap<PartyId, Vec<(PartyId, Payload)>>,
}

impl Network {
    pub fn new() -> Self {
        Network::default()
    }

    /// Queues an honest broadcast, one envelope per recipient, all due at
    /// the full `Δ` bound until the adversary retimes them. Returns indices
    /// of the fresh envelopes for this send.
    pub fn send_honest(
        &mut self,
        from: PartyId,
        recipients: &[PartyId],
        payload: Payload,
        round: Round,
        delta: u64,
    ) -> Vec<usize> {
        let mut ids = Vec::with_capacity(recipients.len());
        for &to in recipients {
            if to == from {
                continue;
            }
            ids.push(self.in_flight.len());
            self.in_flight.push(Envelope {
                claim: from,
                origin: Origin::Honest,
                to,
                sent_at: round,
                deliver_at: round + delta,
                payload: payload.clone(),
            });
        }
        ids
    }

    pub fn envelope(&self, idx: usize) -> &Envelope {
        &self.in_flight[idx]
    }

    /// Retimes a fresh honest envelope within its synchrony window.
    pub fn amend(&mut self, idx: usize, deliver_at: Round, delta: u64) -> Result<(), NetError> {
        let env = &mut self.in_flight[idx];
        let (lo, hi) = (env.sent_at + 1, env.sent_at + delta);
        if deliver_at < lo || deliver_at > hi {
            return Err(NetError::IllegalDelivery { deliver: deliver_at, lo, hi });
        }
        env.deliver_at = deliver_at;
        Ok(())
    }

    /// Queues an adversary-origin envelope. The claim must be a corrupt
    /// validator or any client label; delivery any round after `now`.
    pub fn send_adversarial(
        &mut self,
        claim: PartyId,
        to: PartyId,
        payload: Payload,
        now: Round,
        deliver_at: Round,
        corrupt: &std::collections::BTreeSet<ValidatorId>,
    ) -> Result<(), NetError> {
        if let PartyId::Validator(v) = claim {
            if !corrupt.contains(&v) {
                return Err(NetError::IllegalClaim(v));
            }
        }
        if deliver_at <= now {
            return Err(NetError::IllegalDelivery { deliver: deliver_at, lo: now + 1, hi: Round::MAX });
        }
        self.in_flight.push(Envelope {
            claim,
            origin: Origin::Adversary,
            to,
            sent_at: now,
            deliver_at,
            payload,
        });
        Ok(())
    }

    /// Moves every envelope due this round into its recipient's inbox,
    /// returning the delivered envelopes for trace recording.
    pub fn deliver_due(&mut self, round: Round) -> Vec<Envelope> {
        let mut due = Vec::new();
        let mut rest = Vec::with_capacity(self.in_flight.len());
        for env in self.in_flight.drain(..) {
            if env.deliver_at == round {
                due.push(env);
            } else {
                rest.push(env);
            }
        }
        self.in_flight = rest;
        for env in &due {
            self.inboxes
                .entry(env.to)
                .or_default()
                .push((env.claim, env.payload.clone()));
        }
        due
    }

    /// Drains a party's inbox, stamping the given receipt round and sorting
    /// by (claimed sender, payload digest) for a deterministic read order.
    pub fn read_inbox(&mut self, party: PartyId, receipt: Round) -> Vec<Received> {
        let mut msgs: Vec<Received> = self
            .inboxes
            .remove(&party)
            .unwrap_or_default()
            .into_iter()
            .map(|(from, payload)| Received { from, receipt, payload })
            .collect();
        msgs.sort_by_key(|m| m.sort_key());
        msgs
    }

    pub fn pending_for(&self, party: PartyId) -> usize {
        self.inboxes.get(&party).map_or(0, |v| v.len())
            + self.in_flight.iter().filter(|e| e.to == party).count()
    }
}

/// Awake schedules, indexed `[round][party]`.
pub type Schedule = Vec<Vec<bool>>;

pub fn always_awake(count: usize, horizon: u64) -> Schedule {
    (0..=horizon).map(|_| vec![true; count]).collect()
}

/// Random sleepy schedule: each party is awake each round with probability
/// `awake_p` (in percent), independently.
pub fn random_sleepy(count: usize, horizon: u64, awake_pct: u32, rng: &mut impl Rng) -> Schedule {
    (0..=horizon)
        .map(|_| (0..count).map(|_| rng.gen_range(0..100) < awake_pct).collect())
        .collect()
}

/// Forces the given parties awake for every round of the schedule.
pub fn force_always(sched: &mut Schedule, parties: &[usize]) {
    for row in sched.iter_mut() {
        for &p in parties {
            row[p] = true;
        }
    }
}

/// Forces one party awake over `[from, to)`.
pub fn force_range(sched: &mut Schedule, party: usize, from: Round, to: Round) {
    for r in from..to {
        if let Some(row) = sched.get_mut(r as usize) {
            row[party] = true;
        }
    }
}

/// Ensures at least `min` of the listed parties are awake every round,
/// waking a deterministic choice when a round falls short.
pub fn ensure_min_awake(sched: &mut Schedule, eligible: &[usize], min: usize, rng: &mut impl Rng) {
    for row in sched.iter_mut() {
        let mut awake: Vec<usize> = eligible.iter().copied().filter(|&p| row[p]).collect();
        while awake.len() < min {
            let candidates: Vec<usize> =
                eligible.iter().copied().filter(|&p| !row[p]).collect();
            if candidates.is_empty() {
                break;
            }
            let pick = candidates[rng.gen_range(0..candidates.len())];
            row[pick] = true;
            awake.push(pick);
        }
    }
}
