//! Wire payloads shared by every protocol in the library.
//!
//! All payloads have a canonical byte encoding; inboxes are sorted by
//! `(sender, payload digest)` before a party reads them, which pins down one
//! deterministic processing order per round regardless of send order.

use crate::crypto::{digest_bytes, Signature};
use crate::dolev_strong::SigChain;
use crate::engine::{Certificate, CommitSigMsg, EvidenceMsg, Proposal, Qc, VoteMsg};
use crate::goldfish::{GfBlock, GfProposeMsg, GfVote};
use crate::types::{PartyId, Round, Transaction};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Plain transaction dissemination.
    TxGossip(Transaction),
    /// A validator's signature on a transaction (quorum-queue input).
    TxSigned { tx: Transaction, sig: Signature },
    EngineProposal(Proposal),
    EngineVote(VoteMsg),
    EngineEvidence(EvidenceMsg),
    EngineQc(Qc),
    EngineCommitSig(CommitSigMsg),
    /// A full client-facing certificate, re-gossiped by freeze clients.
    Certificate(Certificate),
    DsChain(SigChain),
    GfPropose(GfProposeMsg),
    GfVote(GfVote),
    /// Liveness heartbeat: tick index plus the sender's signature on it.
    Heartbeat { ell: u64, sig: Signature },
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tx(out: &mut Vec<u8>, tx: &Transaction) {
    put_u64(out, tx.id.0);
    put_u16(out, tx.payload.len() as u16);
    out.extend_from_slice(&tx.payload);
}

fn put_txs(out: &mut Vec<u8>, txs: &[Transaction]) {
    put_u16(out, txs.len() as u16);
    for tx in txs {
        put_tx(out, tx);
    }
}

fn put_sig(out: &mut Vec<u8>, sig: &Signature) {
    put_u16(out, sig.signer);
    put_u64(out, sig.message);
    put_u64(out, sig.tag);
}

fn put_sigs(out: &mut Vec<u8>, sigs: &[Signature]) {
    put_u16(out, sigs.len() as u16);
    for sig in sigs {
        put_sig(out, sig);
    }
}

fn put_proposal(out: &mut Vec<u8>, p: &Proposal) {
    put_u64(out, p.epoch);
    put_txs(out, &p.txs);
    put_sig(out, &p.sig);
}

fn put_block(out: &mut Vec<u8>, b: &GfBlock) {
    put_u64(out, b.slot);
    put_u64(out, b.parent);
    put_u16(out, b.proposer);
    put_txs(out, &b.txs);
    put_sig(out, &b.sig);
}

fn put_vote(out: &mut Vec<u8>, v: &GfVote) {
    put_u64(out, v.slot);
    put_u64(out, v.block);
    put_sig(out, &v.sig);
}

impl Payload {
    /// Canonical encoding; also the basis for digests recorded in traces.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Payload::TxGossip(tx) => {
                out.push(1);
                put_tx(&mut out, tx);
            }
            Payload::TxSigned { tx, sig } => {
                out.push(2);
                put_tx(&mut out, tx);
                put_sig(&mut out, sig);
            }
            Payload::EngineProposal(p) => {
                out.push(3);
                put_proposal(&mut out, p);
            }
            Payload::EngineVote(v) => {
                out.push(4);
                put_proposal(&mut out, &v.proposal);
                put_sig(&mut out, &v.sig);
            }
            Payload::EngineEvidence(ev) => {
                out.push(5);
                put_proposal(&mut out, &ev.a);
                put_proposal(&mut out, &ev.b);
            }
            Payload::EngineQc(qc) => {
                out.push(6);
                put_u64(&mut out, qc.epoch);
                put_txs(&mut out, &qc.txs);
                put_sigs(&mut out, &qc.votes);
            }
            Payload::EngineCommitSig(cs) => {
                out.push(7);
                put_u64(&mut out, cs.epoch);
                put_txs(&mut out, &cs.txs);
                put_sig(&mut out, &cs.sig);
            }
            Payload::Certificate(cert) => {
                out.push(8);
                out.extend_from_slice(&cert.encode());
            }
            Payload::DsChain(chain) => {
                out.push(9);
                put_u64(&mut out, chain.instance);
                put_u16(&mut out, chain.leader);
                put_txs(&mut out, &chain.value);
                put_sigs(&mut out, &chain.sigs);
            }
            Payload::GfPropose(msg) => {
                out.push(10);
                put_u64(&mut out, msg.slot);
                put_u16(&mut out, msg.blocks.len() as u16);
                for b in &msg.blocks {
                    put_block(&mut out, b);
                }
                put_u16(&mut out, msg.votes.len() as u16);
                for v in &msg.votes {
                    put_vote(&mut out, v);
                }
                put_u64(&mut out, msg.head);
                put_sig(&mut out, &msg.sig);
            }
            Payload::GfVote(v) => {
                out.push(11);
                put_vote(&mut out, v);
            }
            Payload::Heartbeat { ell, sig } => {
                out.push(12);
                put_u64(&mut out, *ell);
                put_sig(&mut out, sig);
            }
        }
        out
    }

    pub fn digest(&self) -> u64 {
        digest_bytes(&self.encode())
    }
}

/// A message as read from an inbox: claimed sender, receipt round (the round
/// the reader actually read it, which for sleepy parties is the wake round),
/// and the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub from: PartyId,
    pub receipt: Round,
    pub payload: Payload,
}

impl Received {
    pub fn sort_key(&self) -> (PartyId, u64) {
        (self.from, self.payload.digest())
    }
}
