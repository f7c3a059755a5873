//! Quorum lockstep engine: a synchronous leader-rotation SMR core with
//! certifiable output.
//!
//! Epochs last `4*delta` rounds with leader `epoch % n`:
//!
//! * `4Δe`: the leader proposes its highest-certified log extended with its
//!   pending transactions.
//! * `4Δe + Δ`: each validator votes once, for the first leader proposal
//!   extending its highest-certified log. Votes carry the proposal, so any
//!   equivocation by the leader becomes provable evidence one hop later.
//! * `4Δe + 2Δ`: on a quorum of matching votes and no evidence, a vote
//!   certificate is adopted and rebroadcast.
//! * `4Δe + 3Δ`: the certified log commits if no equivocation evidence and no
//!   conflicting vote certificate for the epoch arrived by then. Committing
//!   validators broadcast a commit signature over the committed log.
//!
//! Client-facing [`Certificate`]s collect a quorum of distinct *commit*
//! signatures, not votes: vote quorums for conflicting logs can coexist under
//! a corrupt leader, but honest validators never commit in such epochs, so
//! commit signatures only accumulate on one chain while fewer than `quorum`
//! validators are corrupt. [`consume`] validates a certificate in isolation;
//! [`ValidatorState`] and [`EngineClient`] are the two live roles.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::{Digester, SigRegistry, Signature};
use crate::messages::{Payload, Received};
use crate::types::{Log, Round, Transaction, TxId, ValidatorId};

/// Static parameters of one engine instance.
#[derive(Debug, Clone, Copy)]
pub struct EngineParams {
    pub n: u16,
    pub quorum: u16,
    pub delta: u64,
    /// Whether validators rebroadcast first-seen transactions as plain
    /// gossip. Disabled when a signing tx-gossip layer already runs.
    pub gossip_txs: bool,
}

impl EngineParams {
    pub fn epoch_len(&self) -> u64 {
        4 * self.delta
    }

    pub fn leader(&self, epoch: u64) -> ValidatorId {
        (epoch % self.n as u64) as ValidatorId
    }

    /// Declared end-to-end latency: two epochs, absorbing one stalled
    /// (faulty-leader) epoch plus certificate propagation to clients.
    pub fn declared_latency(&self) -> Round {
        8 * self.delta
    }
}

pub fn txs_to_log(txs: &[Transaction]) -> Log {
    Log::from_entries(txs.iter().map(|t| t.id).collect())
}

fn txs_digest(txs: &[Transaction]) -> u64 {
    let mut d = Digester::new().u64(txs.len() as u64);
    for tx in txs {
        d = d.u64(tx.id.0).u64(tx.payload.len() as u64).bytes(&tx.payload);
    }
    d.finish()
}

fn ids_prefix(shorter: &[Transaction], longer: &[Transaction]) -> bool {
    shorter.len() <= longer.len()
        && shorter.iter().zip(longer.iter()).all(|(a, b)| a.id == b.id)
}

fn seq_consistent(a: &[Transaction], b: &[Transaction]) -> bool {
    ids_prefix(a, b) || ids_prefix(b, a)
}

fn well_formed(txs: &[Transaction]) -> bool {
    let mut seen = BTreeSet::new();
    txs.iter().all(|t| seen.insert(t.id))
}

pub fn propose_digest(epoch: u64, txs: &[Transaction]) -> u64 {
    Digester::new().bytes(b"engine/propose").u64(epoch).u64(txs_digest(txs)).finish()
}

pub fn vote_digest(epoch: u64, txs: &[Transaction]) -> u64 {
    Digester::new().bytes(b"engine/vote").u64(epoch).u64(txs_digest(txs)).finish()
}

pub fn commit_digest(epoch: u64, txs: &[Transaction]) -> u64 {
    Digester::new().bytes(b"engine/commit").u64(epoch).u64(txs_digest(txs)).finish()
}

/// A leader-signed proposal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub epoch: u64,
    pub txs: Vec<Transaction>,
    pub sig: Signature,
}

impl Proposal {
    pub fn valid(&self, params: &EngineParams, registry: &SigRegistry) -> bool {
        self.sig.signer == params.leader(self.epoch)
            && self.sig.message == propose_digest(self.epoch, &self.txs)
            && registry.verify(&self.sig)
            && well_formed(&self.txs)
    }
}

/// A vote for a proposal; carries the proposal so that everyone who sees two
/// conflicting votes can assemble evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMsg {
    pub proposal: Proposal,
    pub sig: Signature,
}

impl VoteMsg {
    pub fn valid(&self, params: &EngineParams, registry: &SigRegistry) -> bool {
        self.proposal.valid(params, registry)
            && self.sig.message == vote_digest(self.proposal.epoch, &self.proposal.txs)
            && registry.verify(&self.sig)
    }
}

/// Two leader-signed proposals for the same epoch with inconsistent logs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceMsg {
    pub a: Proposal,
    pub b: Proposal,
}

impl EvidenceMsg {
    pub fn valid(&self, params: &EngineParams, registry: &SigRegistry) -> bool {
        self.a.epoch == self.b.epoch
            && self.a.valid(params, registry)
            && self.b.valid(params, registry)
            && !seq_consistent(&self.a.txs, &self.b.txs)
    }
}

/// A quorum of vote signatures over one (epoch, log).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Qc {
    pub epoch: u64,
    pub txs: Vec<Transaction>,
    pub votes: Vec<Signature>,
}

impl Qc {
    pub fn valid(&self, params: &EngineParams, registry: &SigRegistry) -> bool {
        let digest = vote_digest(self.epoch, &self.txs);
        let mut signers = BTreeSet::new();
        self.votes.len() >= params.quorum as usize
            && well_formed(&self.txs)
            && self.votes.iter().all(|sig| {
                sig.message == digest && registry.verify(sig) && signers.insert(sig.signer)
            })
    }
}

/// A validator's announcement that it committed a log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitSigMsg {
    pub epoch: u64,
    pub txs: Vec<Transaction>,
    pub sig: Signature,
}

impl CommitSigMsg {
    pub fn valid(&self, registry: &SigRegistry) -> bool {
        self.sig.message == commit_digest(self.epoch, &self.txs) && registry.verify(&self.sig)
    }
}

/// Client-facing transcript: a quorum of commit signatures over one log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub epoch: u64,
    pub txs: Vec<Transaction>,
    pub sigs: Vec<Signature>,
}

impl Certificate {
    /// The distinguished genesis witness: empty log, no signatures.
    pub fn genesis() -> Self {
        Certificate { epoch: 0, txs: Vec::new(), sigs: Vec::new() }
    }

    pub fn is_genesis(&self) -> bool {
        self.epoch == 0 && self.txs.is_empty() && self.sigs.is_empty()
    }

    pub fn log(&self) -> Log {
        txs_to_log(&self.txs)
    }

    /// Wire format:
    /// `epoch:u64 | log-digest:u64 | log-body | sig-count:u16 | (signer:u16, tag:u64)*`
    /// where log-body is `count:u16 | (id:u64, len:u16, payload)*`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&txs_digest(&self.txs).to_le_bytes());
        out.extend_from_slice(&(self.txs.len() as u16).to_le_bytes());
        for tx in &self.txs {
            out.extend_from_slice(&tx.id.0.to_le_bytes());
            out.extend_from_slice(&(tx.payload.len() as u16).to_le_bytes());
            out.extend_from_slice(&tx.payload);
        }
        out.extend_from_slice(&(self.sigs.len() as u16).to_le_bytes());
        for sig in &self.sigs {
            out.extend_from_slice(&sig.signer.to_le_bytes());
            out.extend_from_slice(&sig.tag.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Certificate> {
        struct Cursor<'a>(&'a [u8]);
        impl<'a> Cursor<'a> {
            fn take(&mut self, k: usize) -> Option<&'a [u8]> {
                if self.0.len() < k {
                    return None;
                }
                let (head, tail) = self.0.split_at(k);
                self.0 = tail;
                Some(head)
            }
            fn u64(&mut self) -> Option<u64> {
                self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            }
            fn u16(&mut self) -> Option<u16> {
                self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
            }
        }
        let mut cur = Cursor(bytes);
        let epoch = cur.u64()?;
        let digest = cur.u64()?;
        let count = cur.u16()?;
        let mut txs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let id = cur.u64()?;
            let len = cur.u16()?;
            let payload = cur.take(len as usize)?.to_vec();
            txs.push(Transaction { id: TxId(id), payload });
        }
        let sig_count = cur.u16()?;
        let mut sigs = Vec::with_capacity(sig_count as usize);
        let commit = commit_digest(epoch, &txs);
        for _ in 0..sig_count {
            let signer = cur.u16()?;
            let tag = cur.u64()?;
            sigs.push(Signature { signer, message: commit, tag });
        }
        if !cur.0.is_empty() || digest != txs_digest(&txs) {
            return None;
        }
        Some(Certificate { epoch, txs, sigs })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsumeError {
    #[error("reject: malformed certificate")]
    Malformed,
    #[error("reject: too-few-signers")]
    TooFewSigners,
    #[error("reject: duplicate-signer")]
    DuplicateSigner,
    #[error("reject: bad-signature")]
    BadSignature,
}

/// Validates a certificate from its wire bytes and returns the log it
/// certifies. Pure in the registry: consuming never mutates anything.
pub fn consume(
    bytes: &[u8],
    quorum: u16,
    registry: &SigRegistry,
) -> Result<Log, ConsumeError> {
    let cert = Certificate::decode(bytes).ok_or(ConsumeError::Malformed)?;
    consume_cert(&cert, quorum, registry)
}

pub fn consume_cert(
    cert: &Certificate,
    quorum: u16,
    registry: &SigRegistry,
) -> Result<Log, ConsumeError> {
    if cert.is_genesis() {
        return Ok(Log::genesis());
    }
    if !well_formed(&cert.txs) {
        return Err(ConsumeError::Malformed);
    }
    let mut signers = BTreeSet::new();
    for sig in &cert.sigs {
        if !signers.insert(sig.signer) {
            return Err(ConsumeError::DuplicateSigner);
        }
    }
    if signers.len() < quorum as usize {
        return Err(ConsumeError::TooFewSigners);
    }
    let digest = commit_digest(cert.epoch, &cert.txs);
    for sig in &cert.sigs {
        if sig.message != digest || !registry.verify(sig) {
            return Err(ConsumeError::BadSignature);
        }
    }
    Ok(cert.log())
}

#[derive(Debug, Clone)]
struct EpochVotes {
    /// digest -> voter -> vote message
    by_digest: BTreeMap<u64, BTreeMap<ValidatorId, VoteMsg>>,
}

/// Validator role of the engine.
#[derive(Debug, Clone)]
pub struct ValidatorState {
    pub me: ValidatorId,
    pub params: EngineParams,
    seen_txs: BTreeSet<TxId>,
    pending: BTreeMap<TxId, Transaction>,
    fresh_gossip: Vec<Transaction>,
    /// Highest adopted vote certificate; `None` means genesis.
    highest_qc: Option<Qc>,
    proposals: BTreeMap<u64, Vec<Proposal>>,
    votes: BTreeMap<u64, EpochVotes>,
    qcs: BTreeMap<u64, BTreeMap<u64, Qc>>,
    evidence: BTreeSet<u64>,
    evidence_emitted: BTreeSet<u64>,
    voted: BTreeSet<u64>,
    committed_epochs: BTreeSet<u64>,
    pub committed: Vec<Transaction>,
}

impl ValidatorState {
    pub fn new(me: ValidatorId, params: EngineParams) -> Self {
        ValidatorState {
            me,
            params,
            seen_txs: BTreeSet::new(),
            pending: BTreeMap::new(),
            fresh_gossip: Vec::new(),
            highest_qc: None,
            proposals: BTreeMap::new(),
            votes: BTreeMap::new(),
            qcs: BTreeMap::new(),
            evidence: BTreeSet::new(),
            evidence_emitted: BTreeSet::new(),
            voted: BTreeSet::new(),
            committed_epochs: BTreeSet::new(),
            committed: Vec::new(),
        }
    }

    pub fn committed_log(&self) -> Log {
        txs_to_log(&self.committed)
    }

    fn certified_txs(&self) -> Vec<Transaction> {
        self.highest_qc.as_ref().map(|qc| qc.txs.clone()).unwrap_or_default()
    }

    fn certified_epoch(&self) -> Option<u64> {
        self.highest_qc.as_ref().map(|qc| qc.epoch)
    }

    /// Feeds a first-seen transaction into the pending pool.
    pub fn feed_tx(&mut self, tx: &Transaction) {
        if self.seen_txs.insert(tx.id) {
            self.pending.insert(tx.id, tx.clone());
            if self.params.gossip_txs {
                self.fresh_gossip.push(tx.clone());
            }
        }
    }

    fn note_proposal(&mut self, p: Proposal) {
        let known = self
            .proposals
            .get(&p.epoch)
            .map_or(false, |list| list.iter().any(|q| q.sig == p.sig && q.txs == p.txs));
        if !known {
            for tx in &p.txs {
                self.feed_tx(tx);
            }
            self.proposals.entry(p.epoch).or_default().push(p);
        }
    }

    fn note_vote(&mut self, v: VoteMsg) {
        self.note_proposal(v.proposal.clone());
        let epoch = v.proposal.epoch;
        let digest = vote_digest(epoch, &v.proposal.txs);
        self.votes
            .entry(epoch)
            .or_insert_with(|| EpochVotes { by_digest: BTreeMap::new() })
            .by_digest
            .entry(digest)
            .or_default()
            .entry(v.sig.signer)
            .or_insert(v);
    }

    fn note_qc(&mut self, qc: Qc) {
        let adopt = self.certified_epoch().map_or(true, |e| qc.epoch > e);
        self.qcs
            .entry(qc.epoch)
            .or_default()
            .entry(vote_digest(qc.epoch, &qc.txs))
            .or_insert_with(|| qc.clone());
        if adopt {
            self.highest_qc = Some(qc);
        }
    }

    fn detect_evidence(&mut self, out: &mut Vec<Payload>, registry: &SigRegistry) {
        let epochs: Vec<u64> = self.proposals.keys().copied().collect();
        for epoch in epochs {
            if self.evidence_emitted.contains(&epoch) {
                continue;
            }
            let list = &self.proposals[&epoch];
            let mut found = None;
            'outer: for (i, a) in list.iter().enumerate() {
                for b in &list[i + 1..] {
                    if !seq_consistent(&a.txs, &b.txs) {
                        found = Some((a.clone(), b.clone()));
                        break 'outer;
                    }
                }
            }
            if let Some((a, b)) = found {
                let ev = EvidenceMsg { a, b };
                debug_assert!(ev.valid(&self.params, registry));
                self.evidence.insert(epoch);
                self.evidence_emitted.insert(epoch);
                out.push(Payload::EngineEvidence(ev));
            }
        }
    }

    /// One synchronous round. `inputs` are environment transactions received
    /// this round; `inbox` are the messages read this round.
    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        let mut out = Vec::new();
        for tx in inputs {
            self.feed_tx(tx);
        }
        for msg in inbox {
            match &msg.payload {
                Payload::TxGossip(tx) => self.feed_tx(tx),
                // The attached signature matters to quorum-queue clients, not
                // to the engine; the transaction itself is ingested either way.
                Payload::TxSigned { tx, .. } => self.feed_tx(tx),
                Payload::EngineProposal(p) => {
                    if p.valid(&self.params, registry) {
                        self.note_proposal(p.clone());
                    }
                }
                Payload::EngineVote(v) => {
                    if v.valid(&self.params, registry) {
                        self.note_vote(v.clone());
                    }
                }
                Payload::EngineEvidence(ev) => {
                    if ev.valid(&self.params, registry) {
                        self.evidence.insert(ev.a.epoch);
                    }
                }
                Payload::EngineQc(qc) => {
                    if qc.valid(&self.params, registry) {
                        self.note_qc(qc.clone());
                    }
                }
                _ => {}
            }
        }
        self.detect_evidence(&mut out, registry);

        let epoch_len = self.params.epoch_len();
        let epoch = round / epoch_len;
        let phase = round % epoch_len;
        let delta = self.params.delta;

        if phase == 0 && self.params.leader(epoch) == self.me {
            let mut txs = self.certified_txs();
            let have: BTreeSet<TxId> = txs.iter().map(|t| t.id).collect();
            for (id, tx) in &self.pending {
                if !have.contains(id) {
                    txs.push(tx.clone());
                }
            }
            let sig = registry.sign(self.me, propose_digest(epoch, &txs));
            let proposal = Proposal { epoch, txs, sig };
            self.note_proposal(proposal.clone());
            out.push(Payload::EngineProposal(proposal));
        }

        if phase == delta && !self.voted.contains(&epoch) && !self.evidence.contains(&epoch) {
            let base = self.certified_txs();
            let choice = self
                .proposals
                .get(&epoch)
                .and_then(|list| list.iter().find(|p| ids_prefix(&base, &p.txs)))
                .cloned();
            if let Some(proposal) = choice {
                let sig = registry.sign(self.me, vote_digest(epoch, &proposal.txs));
                let vote = VoteMsg { proposal, sig };
                self.note_vote(vote.clone());
                self.voted.insert(epoch);
                out.push(Payload::EngineVote(vote));
            }
        }

        if phase == 2 * delta && !self.evidence.contains(&epoch) {
            let assembled = self.votes.get(&epoch).and_then(|ev| {
                ev.by_digest
                    .iter()
                    .filter(|(_, votes)| votes.len() >= self.params.quorum as usize)
                    .max_by_key(|(digest, votes)| (votes.len(), std::cmp::Reverse(**digest)))
                    .map(|(_, votes)| {
                        let sample = votes.values().next().unwrap().proposal.clone();
                        let sigs: Vec<Signature> = votes
                            .values()
                            .take(self.params.quorum as usize)
                            .map(|v| v.sig)
                            .collect();
                        Qc { epoch, txs: sample.txs, votes: sigs }
                    })
            });
            if let Some(qc) = assembled {
                if self.qcs.get(&epoch).map_or(true, |m| !m.contains_key(&vote_digest(epoch, &qc.txs))) {
                    self.note_qc(qc.clone());
                    out.push(Payload::EngineQc(qc));
                }
            }
        }

        if phase == 3 * delta
            && !self.committed_epochs.contains(&epoch)
            && !self.evidence.contains(&epoch)
        {
            if let Some(map) = self.qcs.get(&epoch) {
                if map.len() == 1 {
                    let qc = map.values().next().unwrap().clone();
                    self.committed_epochs.insert(epoch);
                    self.committed = qc.txs.clone();
                    let sig = registry.sign(self.me, commit_digest(epoch, &qc.txs));
                    // Rebroadcast the certificate being committed on: a voter
                    // that missed it must adopt it before the next epoch's
                    // vote phase, or it could vote for a conflicting branch.
                    out.push(Payload::EngineQc(qc.clone()));
                    out.push(Payload::EngineCommitSig(CommitSigMsg {
                        epoch,
                        txs: qc.txs,
                        sig,
                    }));
                }
            }
        }

        for tx in std::mem::take(&mut self.fresh_gossip) {
            out.push(Payload::TxGossip(tx));
        }
        out
    }
}

/// Client role: collects commit signatures into certificates and follows the
/// highest-epoch certificate. Silent; never sends.
#[derive(Debug, Clone)]
pub struct EngineClient {
    pub quorum: u16,
    /// (epoch, commit digest) -> (txs, signer -> sig)
    partial: BTreeMap<(u64, u64), (Vec<Transaction>, BTreeMap<ValidatorId, Signature>)>,
    best: Option<Certificate>,
}

impl EngineClient {
    pub fn new(quorum: u16) -> Self {
        EngineClient { quorum, partial: BTreeMap::new(), best: None }
    }

    pub fn log(&self) -> Log {
        self.best.as_ref().map(|c| c.log()).unwrap_or_default()
    }

    /// Current transcript: the best certificate, or the genesis witness.
    pub fn witness(&self) -> Certificate {
        self.best.clone().unwrap_or_else(Certificate::genesis)
    }

    pub fn adopt(&mut self, cert: Certificate) {
        if cert.is_genesis() {
            return;
        }
        let better = match &self.best {
            None => true,
            Some(b) => cert.epoch > b.epoch,
        };
        if better {
            self.best = Some(cert);
        }
    }

    pub fn step(&mut self, inbox: &[Received], registry: &SigRegistry) {
        for msg in inbox {
            match &msg.payload {
                Payload::EngineCommitSig(cs) => {
                    if !cs.valid(registry) {
                        continue;
                    }
                    let key = (cs.epoch, commit_digest(cs.epoch, &cs.txs));
                    let entry = self
                        .partial
                        .entry(key)
                        .or_insert_with(|| (cs.txs.clone(), BTreeMap::new()));
                    entry.1.entry(cs.sig.signer).or_insert(cs.sig);
                    if entry.1.len() >= self.quorum as usize {
                        let cert = Certificate {
                            epoch: cs.epoch,
                            txs: entry.0.clone(),
                            sigs: entry.1.values().copied().collect(),
                        };
                        self.adopt(cert);
                    }
                }
                Payload::Certificate(cert) => {
                    if consume_cert(cert, self.quorum, registry).is_ok() {
                        self.adopt(cert.clone());
                    }
                }
                _ => {}
            }
        }
    }
}
