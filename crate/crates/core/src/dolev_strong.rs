//! Broadcast-based SMR built on signature chains.
//!
//! Time is divided into periods of `2nΔ` rounds. At the start of each period
//! every validator leads one broadcast instance, proposing every transaction
//! it has seen. A proposal spreads as a growing chain of signatures: the
//! leader's signature first, then one per relaying validator, each signing
//! the running digest of everything before it.
//!
//! Timing does the Byzantine filtering. A chain carrying `k` signatures is
//! accepted by a validator only within `2kΔ` rounds of the instance start,
//! and by a client only within `(2k-1)Δ` rounds. The staggered bounds leave
//! exactly enough slack for a client to relay a chain it accepted and for an
//! awake validator to countersign it, so anything any honest client accepts
//! is accepted by every honest client before the period ends, even when most
//! validators sleep. Validators countersign at most two distinct values per
//! instance: two values already prove leader equivocation, and every client
//! will then resolve that instance to the empty block.
//!
//! At the period boundary each client turns every instance into a block (the
//! value, if it extracted exactly one, else empty) and appends the blocks in
//! leader order.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Digester, SigRegistry, Signature};
use crate::messages::{Payload, Received};
use crate::types::{Log, Round, Transaction, TxId, ValidatorId};

#[derive(Debug, Clone, Copy)]
pub struct DsParams {
    pub n: u16,
    pub delta: u64,
}

impl DsParams {
    pub fn period_len(&self) -> u64 {
        2 * self.n as u64 * self.delta
    }

    pub fn instance_start(&self, instance: u64) -> Round {
        (instance / self.n as u64) * self.period_len()
    }

    pub fn instance_leader(&self, instance: u64) -> ValidatorId {
        (instance % self.n as u64) as ValidatorId
    }

    /// Worst-case rounds from transaction receipt to client output: the
    /// remainder of the current period plus one full period to resolve.
    pub fn declared_latency(&self) -> Round {
        2 * self.period_len()
    }
}

fn txs_digest(txs: &[Transaction]) -> u64 {
    let mut d = Digester::new().u64(txs.len() as u64);
    for tx in txs {
        d = d.u64(tx.id.0).u64(tx.payload.len() as u64).bytes(&tx.payload);
    }
    d.finish()
}

/// A value under broadcast together with its signature chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigChain {
    pub instance: u64,
    pub leader: ValidatorId,
    pub value: Vec<Transaction>,
    pub sigs: Vec<Signature>,
}

impl SigChain {
    pub fn root_digest(instance: u64, leader: ValidatorId, value: &[Transaction]) -> u64 {
        Digester::new()
            .bytes(b"ds/chain")
            .u64(instance)
            .u16(leader)
            .u64(txs_digest(value))
            .finish()
    }

    pub fn value_digest(&self) -> u64 {
        txs_digest(&self.value)
    }

    fn link(prev: u64, sig: &Signature) -> u64 {
        Digester::new().bytes(b"ds/link").u64(prev).u16(sig.signer).u64(sig.tag).finish()
    }

    /// The digest the next signer must sign.
    pub fn tip_digest(&self) -> u64 {
        let mut d = Self::root_digest(self.instance, self.leader, &self.value);
        for sig in &self.sigs {
            d = Self::link(d, sig);
        }
        d
    }

    pub fn k(&self) -> usize {
        self.sigs.len()
    }

    /// Structural and cryptographic validity: leader signs first, signers are
    /// distinct, and each signature covers the chain before it.
    pub fn valid(&self, registry: &SigRegistry) -> bool {
        if self.sigs.is_empty() || self.sigs[0].signer != self.leader {
            return false;
        }
        let mut seen = BTreeSet::new();
        let mut digest = Self::root_digest(self.instance, self.leader, &self.value);
        for sig in &self.sigs {
            if !seen.insert(sig.signer)
                || sig.message != digest
                || !registry.verify(sig)
            {
                return false;
            }
            digest = Self::link(digest, sig);
        }
        true
    }

    pub fn extend(&self, me: ValidatorId, registry: &mut SigRegistry) -> SigChain {
        let sig = registry.sign(me, self.tip_digest());
        let mut next = self.clone();
        next.sigs.push(sig);
        next
    }
}

/// Validator role: leads one instance per period, countersigns timely chains.
#[derive(Debug, Clone)]
pub struct DsValidator {
    pub me: ValidatorId,
    pub params: DsParams,
    seen: BTreeSet<TxId>,
    pool: BTreeMap<TxId, Transaction>,
    /// instance -> value digests this validator has countersigned (max 2).
    signed: BTreeMap<u64, BTreeSet<u64>>,
}

impl DsValidator {
    pub fn new(me: ValidatorId, params: DsParams) -> Self {
        DsValidator { me, params, seen: BTreeSet::new(), pool: BTreeMap::new(), signed: BTreeMap::new() }
    }

    fn feed_tx(&mut self, tx: &Transaction, fresh: &mut Vec<Transaction>) {
        if self.seen.insert(tx.id) {
            self.pool.insert(tx.id, tx.clone());
            fresh.push(tx.clone());
        }
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        let mut out = Vec::new();
        let mut fresh = Vec::new();
        for tx in inputs {
            self.feed_tx(tx, &mut fresh);
        }
        for msg in inbox {
            match &msg.payload {
                Payload::TxGossip(tx) | Payload::TxSigned { tx, .. } => {
                    self.feed_tx(tx, &mut fresh)
                }
                Payload::DsChain(chain) => {
                    if !chain.valid(registry) {
                        continue;
                    }
                    let start = self.params.instance_start(chain.instance);
                    if msg.receipt < start
                        || msg.receipt - start > 2 * chain.k() as u64 * self.params.delta
                    {
                        continue;
                    }
                    if chain.sigs.iter().any(|s| s.signer == self.me) {
                        continue;
                    }
                    let digest = chain.value_digest();
                    let signed = self.signed.entry(chain.instance).or_default();
                    if signed.contains(&digest) || signed.len() >= 2 {
                        continue;
                    }
                    signed.insert(digest);
                    for tx in &chain.value {
                        self.feed_tx(tx, &mut fresh);
                    }
                    out.push(Payload::DsChain(chain.extend(self.me, registry)));
                }
                _ => {}
            }
        }

        if round % self.params.period_len() == 0 {
            let period = round / self.params.period_len();
            let instance = period * self.params.n as u64 + self.me as u64;
            let value: Vec<Transaction> = self.pool.values().cloned().collect();
            let sig = registry.sign(
                self.me,
                SigChain::root_digest(instance, self.me, &value),
            );
            let chain = SigChain { instance, leader: self.me, value, sigs: vec![sig] };
            self.signed.entry(instance).or_default().insert(chain.value_digest());
            out.push(Payload::DsChain(chain));
        }

        for tx in fresh {
            out.push(Payload::TxGossip(tx));
        }
        out
    }
}

/// Client role: extracts values per instance under the client timing bound,
/// optionally relays accepted chains, and assembles the log at period ends.
#[derive(Debug, Clone)]
pub struct DsClient {
    pub params: DsParams,
    /// Whether this client may send (relay chains, forward inputs).
    pub communicating: bool,
    extracted: BTreeMap<u64, BTreeMap<u64, Vec<Transaction>>>,
    relayed: BTreeSet<(u64, u64)>,
    finalized_periods: u64,
    log: Log,
}

impl DsClient {
    pub fn new(params: DsParams, communicating: bool) -> Self {
        DsClient {
            params,
            communicating,
            extracted: BTreeMap::new(),
            relayed: BTreeSet::new(),
            finalized_periods: 0,
            log: Log::genesis(),
        }
    }

    pub fn log(&self) -> Log {
        self.log.clone()
    }

    fn finalize_up_to(&mut self, period: u64) {
        while self.finalized_periods < period {
            let p = self.finalized_periods;
            for l in 0..self.params.n as u64 {
                let instance = p * self.params.n as u64 + l;
                if let Some(values) = self.extracted.get(&instance) {
                    if values.len() == 1 {
                        for tx in values.values().next().unwrap() {
                            self.log.append(tx.id);
                        }
                    }
                }
            }
            self.finalized_periods += 1;
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
        self.finalize_up_to(round / self.params.period_len());
        if self.communicating {
            for tx in inputs {
                out.push(Payload::TxGossip(tx.clone()));
            }
        }
        for msg in inbox {
            if let Payload::DsChain(chain) = &msg.payload {
                if !chain.valid(registry) {
                    continue;
                }
                let start = self.params.instance_start(chain.instance);
                if msg.receipt < start
                    || msg.receipt - start > (2 * chain.k() as u64 - 1) * self.params.delta
                {
                    continue;
                }
                let digest = chain.value_digest();
                self.extracted
                    .entry(chain.instance)
                    .or_default()
                    .entry(digest)
                    .or_insert_with(|| chain.value.clone());
                if self.communicating && self.relayed.insert((chain.instance, digest)) {
                    out.push(Payload::DsChain(chain.clone()));
                }
            }
        }
        out
    }
}
