//! Client-side gadgets layered over the SMR engines.
//!
//! Each gadget turns an engine's client role into one cell of the
//! client-model landscape:
//!
//! * [`FreezeClient`]: communicating, for safety across sleep. Consumes every
//!   certificate it can see or assemble, re-gossips each once, and adopts a
//!   candidate log only after it has been on the table for a full `Δ`
//!   gossip tick and is consistent with everything consumed. Output never
//!   regresses (it freezes rather than follow a conflicting certificate).
//! * [`QuorumQueueClient`]: silent, for liveness. Queues a transaction once
//!   `q` distinct validators have signed it, and appends queued entries
//!   behind the certified log after the engine's declared latency.
//! * [`GossipQueueClient`]: communicating, for liveness even with every
//!   validator corrupt. Queues first-seen transactions immediately,
//!   re-gossips them once, and appends after the declared latency plus one
//!   extra `Δ` so every peer queues a transaction before anyone appends it.
//! * [`HeartbeatQueueClient`]: silent, for liveness under sleepy validators.
//!   Validators heartbeat every `Δ`; a transaction is queued at a tick when
//!   the fraction of known signers against the previous tick's heartbeat
//!   count reaches `φ`. A zero denominator queues nothing that tick.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{digest_bytes, Digester, SigRegistry, Signature};
use crate::engine::{consume_cert, Certificate, EngineClient, ValidatorState};
use crate::goldfish::{GfClient, GfValidator};
use crate::messages::{Payload, Received};
use crate::types::{Log, Round, Transaction, TxId, ValidatorId};

pub fn txsig_digest(tx: &Transaction) -> u64 {
    Digester::new()
        .bytes(b"gadget/txsig")
        .u64(tx.id.0)
        .u64(tx.payload.len() as u64)
        .bytes(&tx.payload)
        .finish()
}

pub fn heartbeat_digest(ell: u64) -> u64 {
    Digester::new().bytes(b"gadget/hb").u64(ell).finish()
}

fn queue_suffix(
    internal: &Log,
    queued: &BTreeMap<TxId, Round>,
    cutoff_round: Option<Round>,
) -> Log {
    let mut log = internal.clone();
    let mut due: Vec<(Round, TxId)> = queued
        .iter()
        .filter(|(_, added)| cutoff_round.map_or(false, |c| **added <= c))
        .map(|(id, added)| (*added, *id))
        .collect();
    due.sort_unstable();
    for (_, id) in due {
        log.append(id);
    }
    log
}

/// Engine validator that additionally signs every first-seen transaction,
/// feeding quorum-queue clients.
#[derive(Debug, Clone)]
pub struct SignerValidator {
    pub inner: ValidatorState,
    signed: BTreeSet<TxId>,
}

impl SignerValidator {
    pub fn new(inner: ValidatorState) -> Self {
        SignerValidator { inner, signed: BTreeSet::new() }
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        let me = self.inner.me;
        let mut out = self.inner.step(round, inputs, inbox, registry);
        let mut fresh: Vec<Transaction> = Vec::new();
        let mut note = |tx: &Transaction, signed: &mut BTreeSet<TxId>| {
            if signed.insert(tx.id) {
                fresh.push(tx.clone());
            }
        };
        for tx in inputs {
            note(tx, &mut self.signed);
        }
        for msg in inbox {
            match &msg.payload {
                Payload::TxGossip(tx) | Payload::TxSigned { tx, .. } => {
                    note(tx, &mut self.signed)
                }
                Payload::EngineProposal(p) => {
                    for tx in &p.txs {
                        note(tx, &mut self.signed);
                    }
                }
                _ => {}
            }
        }
        for tx in fresh {
            let sig = registry.sign(me, txsig_digest(&tx));
            out.push(Payload::TxSigned { tx, sig });
        }
        out
    }
}

/// Sleepy-validator liveness wrapper: heartbeats and tick-aligned
/// transaction signatures on top of a tree-protocol validator.
#[derive(Debug, Clone)]
pub struct PhiValidator {
    pub inner: GfValidator,
    unsigned: Vec<Transaction>,
    seen: BTreeSet<TxId>,
}

impl PhiValidator {
    pub fn new(inner: GfValidator) -> Self {
        PhiValidator { inner, unsigned: Vec::new(), seen: BTreeSet::new() }
    }

    fn note(&mut self, tx: &Transaction) {
        if self.seen.insert(tx.id) {
            self.unsigned.push(tx.clone());
        }
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        let delta = self.inner.params.delta;
        let me = self.inner.me;
        for tx in inputs {
            self.note(tx);
        }
        for msg in inbox {
            match &msg.payload {
                Payload::TxGossip(tx) | Payload::TxSigned { tx, .. } => self.note(tx),
                Payload::GfPropose(pm) => {
                    let txs: Vec<Transaction> =
                        pm.blocks.iter().flat_map(|b| b.txs.iter().cloned()).collect();
                    for tx in &txs {
                        self.note(tx);
                    }
                }
                _ => {}
            }
        }
        let mut out = self.inner.step(round, inputs, inbox, registry);
        if round % delta == 0 {
            let ell = round / delta;
            let sig = registry.sign(me, heartbeat_digest(ell));
            out.push(Payload::Heartbeat { ell, sig });
            for tx in std::mem::take(&mut self.unsigned) {
                let sig = registry.sign(me, txsig_digest(&tx));
                out.push(Payload::TxSigned { tx, sig });
            }
        }
        out
    }
}

/// Safety gadget for sleepy communicating clients over a certificate engine.
#[derive(Debug, Clone)]
pub struct FreezeClient {
    pub delta: u64,
    pub quorum: u16,
    partial: BTreeMap<(u64, u64), (Vec<Transaction>, BTreeMap<ValidatorId, Signature>)>,
    assembled: BTreeSet<(u64, u64)>,
    consumed: Vec<Log>,
    consumed_digests: BTreeSet<u64>,
    pending_relay: Vec<Certificate>,
    relayed: BTreeSet<(u64, u64)>,
    candidate_prev: Option<Log>,
    output: Log,
}

impl FreezeClient {
    pub fn new(delta: u64, quorum: u16) -> Self {
        FreezeClient {
            delta,
            quorum,
            partial: BTreeMap::new(),
            assembled: BTreeSet::new(),
            consumed: Vec::new(),
            consumed_digests: BTreeSet::new(),
            pending_relay: Vec::new(),
            relayed: BTreeSet::new(),
            candidate_prev: None,
            output: Log::genesis(),
        }
    }

    pub fn log(&self) -> Log {
        self.output.clone()
    }

    /// Logs consumed so far; every future output must stay consistent with
    /// all of them.
    pub fn consumed(&self) -> &[Log] {
        &self.consumed
    }

    fn log_digest(log: &Log) -> u64 {
        let mut bytes = Vec::new();
        for id in log.entries() {
            bytes.extend_from_slice(&id.0.to_le_bytes());
        }
        digest_bytes(&bytes)
    }

    fn ingest(&mut self, cert: Certificate, registry: &SigRegistry) {
        if cert.is_genesis() {
            return;
        }
        let log = match consume_cert(&cert, self.quorum, registry) {
            Ok(log) => log,
            Err(_) => return,
        };
        let key = (cert.epoch, Self::log_digest(&log));
        if self.relayed.insert(key) {
            self.pending_relay.push(cert);
        }
        if self.consumed_digests.insert(Self::log_digest(&log)) {
            self.consumed.push(log);
        }
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &SigRegistry,
    ) -> Vec<Payload> {
        let mut out = Vec::new();
        for tx in inputs {
            out.push(Payload::TxGossip(tx.clone()));
        }
        for msg in inbox {
            match &msg.payload {
                Payload::Certificate(cert) => self.ingest(cert.clone(), registry),
                Payload::EngineCommitSig(cs) => {
                    if !cs.valid(registry) {
                        continue;
                    }
                    let key = (cs.epoch, crate::engine::commit_digest(cs.epoch, &cs.txs));
                    let entry = self
                        .partial
                        .entry(key)
                        .or_insert_with(|| (cs.txs.clone(), BTreeMap::new()));
                    entry.1.entry(cs.sig.signer).or_insert(cs.sig);
                    if entry.1.len() >= self.quorum as usize && self.assembled.insert(key) {
                        let cert = Certificate {
                            epoch: cs.epoch,
                            txs: entry.0.clone(),
                            sigs: entry.1.values().copied().collect(),
                        };
                        self.ingest(cert, registry);
                    }
                }
                _ => {}
            }
        }
        if round % self.delta == 0 {
            for cert in std::mem::take(&mut self.pending_relay) {
                out.push(Payload::Certificate(cert));
            }
            if let Some(cand) = &self.candidate_prev {
                if self.output.is_prefix_of(cand)
                    && self.consumed.iter().all(|m| cand.is_consistent_with(m))
                {
                    self.output = cand.clone();
                }
            }
            self.candidate_prev = self
                .consumed
                .iter()
                .max_by_key(|log| (log.len(), std::cmp::Reverse(Self::log_digest(log))))
                .cloned();
        }
        out
    }
}

/// Liveness gadget for silent always-on clients: quorum-signed queue.
#[derive(Debug, Clone)]
pub struct QuorumQueueClient {
    pub engine_sub: EngineClient,
    pub q: u16,
    pub u_int: u64,
    sig_sets: BTreeMap<TxId, BTreeSet<ValidatorId>>,
    queued: BTreeMap<TxId, Round>,
}

impl QuorumQueueClient {
    pub fn new(quorum: u16, q: u16, u_int: u64) -> Self {
        QuorumQueueClient {
            engine_sub: EngineClient::new(quorum),
            q,
            u_int,
            sig_sets: BTreeMap::new(),
            queued: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, round: Round, inbox: &[Received], registry: &SigRegistry) {
        self.engine_sub.step(inbox, registry);
        for msg in inbox {
            if let Payload::TxSigned { tx, sig } = &msg.payload {
                if sig.message != txsig_digest(tx) || !registry.verify(sig) {
                    continue;
                }
                let set = self.sig_sets.entry(tx.id).or_default();
                set.insert(sig.signer);
                if set.len() >= self.q as usize {
                    self.queued.entry(tx.id).or_insert(round);
                }
            }
        }
    }

    pub fn log_at(&self, round: Round) -> Log {
        let cutoff = round.checked_sub(self.u_int);
        queue_suffix(&self.engine_sub.log(), &self.queued, cutoff)
    }
}

/// Liveness gadget for communicating clients; keeps working when every
/// validator is corrupt because clients gossip among themselves.
#[derive(Debug, Clone)]
pub struct GossipQueueClient {
    pub engine_sub: EngineClient,
    pub delta: u64,
    pub u_int: u64,
    txs: BTreeMap<TxId, Transaction>,
    queued: BTreeMap<TxId, Round>,
}

impl GossipQueueClient {
    pub fn new(quorum: u16, delta: u64, u_int: u64) -> Self {
        GossipQueueClient {
            engine_sub: EngineClient::new(quorum),
            delta,
            u_int,
            txs: BTreeMap::new(),
            queued: BTreeMap::new(),
        }
    }

    fn enqueue(&mut self, tx: &Transaction, round: Round, out: &mut Vec<Payload>) {
        if !self.queued.contains_key(&tx.id) {
            self.queued.insert(tx.id, round);
            self.txs.insert(tx.id, tx.clone());
            out.push(Payload::TxGossip(tx.clone()));
        }
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &SigRegistry,
    ) -> Vec<Payload> {
        self.engine_sub.step(inbox, registry);
        let mut out = Vec::new();
        for tx in inputs {
            self.enqueue(tx, round, &mut out);
        }
        for msg in inbox {
            if let Payload::TxGossip(tx) | Payload::TxSigned { tx, .. } = &msg.payload {
                let tx = tx.clone();
                self.enqueue(&tx, round, &mut out);
            }
        }
        out
    }

    pub fn log_at(&self, round: Round) -> Log {
        // One extra delta so every honest client has queued a transaction
        // before the first one appends it.
        let cutoff = round.checked_sub(self.u_int + self.delta);
        queue_suffix(&self.engine_sub.log(), &self.queued, cutoff)
    }
}

/// Liveness gadget for silent clients over sleepy validators. The heartbeat
/// denominator adapts the quorum to however many validators are awake.
#[derive(Debug, Clone)]
pub struct HeartbeatQueueClient {
    pub inner: GfClient,
    pub phi: (u64, u64),
    pub delta: u64,
    pub u_int: u64,
    heartbeats: BTreeMap<u64, BTreeSet<ValidatorId>>,
    sig_sets: BTreeMap<TxId, BTreeSet<ValidatorId>>,
    queued: BTreeMap<TxId, Round>,
    /// Tick -> denominator used at that tick (audit surface).
    tally: BTreeMap<u64, usize>,
    pub division_undefined: u64,
}

impl HeartbeatQueueClient {
    pub fn new(inner: GfClient, phi: (u64, u64), u_int: u64) -> Self {
        let delta = inner.params.delta;
        HeartbeatQueueClient {
            inner,
            phi,
            delta,
            u_int,
            heartbeats: BTreeMap::new(),
            sig_sets: BTreeMap::new(),
            queued: BTreeMap::new(),
            tally: BTreeMap::new(),
            division_undefined: 0,
        }
    }

    pub fn tally(&self) -> &BTreeMap<u64, usize> {
        &self.tally
    }

    pub fn heartbeats_at(&self, ell: u64) -> BTreeSet<ValidatorId> {
        self.heartbeats.get(&ell).cloned().unwrap_or_default()
    }

    pub fn step(&mut self, round: Round, inbox: &[Received], registry: &SigRegistry) {
        self.inner.step(round, inbox, registry);
        for msg in inbox {
            match &msg.payload {
                Payload::Heartbeat { ell, sig } => {
                    if sig.message == heartbeat_digest(*ell) && registry.verify(sig) {
                        self.heartbeats.entry(*ell).or_default().insert(sig.signer);
                    }
                }
                Payload::TxSigned { tx, sig } => {
                    if sig.message == txsig_digest(tx) && registry.verify(sig) {
                        self.sig_sets.entry(tx.id).or_default().insert(sig.signer);
                    }
                }
                _ => {}
            }
        }
        if round % self.delta == 0 && round > 0 {
            let ell = round / self.delta;
            let denom = self.heartbeats.get(&(ell - 1)).map_or(0, |s| s.len());
            self.tally.insert(ell, denom);
            if denom == 0 {
                // Ratio against an empty tick is undefined; queue nothing.
                self.division_undefined += 1;
            } else {
                let (p, q) = self.phi;
                let due: Vec<TxId> = self
                    .sig_sets
                    .iter()
                    .filter(|(id, set)| {
                        !self.queued.contains_key(*id)
                            && set.len() as u64 * q >= p * denom as u64
                    })
                    .map(|(id, _)| *id)
                    .collect();
                for id in due {
                    self.queued.insert(id, round);
                }
            }
        }
    }

    pub fn log_at(&self, round: Round) -> Log {
        let cutoff = round.checked_sub(self.u_int);
        queue_suffix(&self.inner.log(), &self.queued, cutoff)
    }
}
