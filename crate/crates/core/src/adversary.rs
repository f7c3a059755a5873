//! Adversary strategies: randomized fuzzers and scripted attacks.
//!
//! Fuzzers drive corrupted validators through their honest role logic and
//! then deviate at the network boundary (retiming, dropping, selective
//! delivery, equivocation, spoofed sender labels). Scripted attacks encode
//! specific failure constructions; each is expected to break exactly the
//! configurations it targets and to bounce off everything else.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crypto::SigRegistry;
use crate::dolev_strong::SigChain;
use crate::engine::{
    commit_digest, propose_digest as en_propose_digest, vote_digest as en_vote_digest,
    Certificate, Proposal, VoteMsg,
};
use crate::gadgets::{heartbeat_digest, txsig_digest};
use crate::goldfish::{
    block_digest, propose_digest as gf_propose_digest, vote_digest as gf_vote_digest, GfBlock,
    GfProposeMsg, GfVote, GENESIS_HASH,
};
use crate::messages::Payload;
use crate::sim::{AdvCtx, Strategy};
use crate::types::{ClientId, PartyId, Round, Transaction, ValidatorId};

/// Fabricated transaction ids live far above anything a scenario injects.
pub const MARKER_BASE: u64 = 1 << 40;

fn variant_txs(txs: &[Transaction], rng: &mut ChaCha8Rng) -> Vec<Transaction> {
    if txs.len() >= 2 {
        let mut v = txs.to_vec();
        v.reverse();
        v
    } else {
        let mut v = txs.to_vec();
        v.push(Transaction::new(MARKER_BASE + rng.gen_range(0..1_000_000)));
        v
    }
}

/// Builds a conflicting twin of a corrupted party's own message, if the
/// payload kind supports one. Returns `None` for kinds with nothing to fork
/// or when the signer is not under adversary control.
pub fn fork_payload(
    payload: &Payload,
    v: ValidatorId,
    registry: &mut SigRegistry,
    rng: &mut ChaCha8Rng,
) -> Option<Payload> {
    match payload {
        Payload::EngineProposal(p) if p.sig.signer == v => {
            let txs = variant_txs(&p.txs, rng);
            let sig = registry.adversary_sign(v, en_propose_digest(p.epoch, &txs)).ok()?;
            Some(Payload::EngineProposal(Proposal { epoch: p.epoch, txs, sig }))
        }
        Payload::EngineVote(vm)
            if vm.sig.signer == v && registry.is_corrupt(vm.proposal.sig.signer) =>
        {
            // Double vote: fork the (corrupt) leader's proposal and vote it.
            let leader = vm.proposal.sig.signer;
            let epoch = vm.proposal.epoch;
            let txs = variant_txs(&vm.proposal.txs, rng);
            let psig = registry.adversary_sign(leader, en_propose_digest(epoch, &txs)).ok()?;
            let vsig = registry.adversary_sign(v, en_vote_digest(epoch, &txs)).ok()?;
            Some(Payload::EngineVote(VoteMsg {
                proposal: Proposal { epoch, txs, sig: psig },
                sig: vsig,
            }))
        }
        Payload::DsChain(c)
            if c.leader == v && c.sigs.len() == 1 && c.sigs[0].signer == v =>
        {
            let value = variant_txs(&c.value, rng);
            let sig = registry
                .adversary_sign(v, SigChain::root_digest(c.instance, v, &value))
                .ok()?;
            Some(Payload::DsChain(SigChain {
                instance: c.instance,
                leader: v,
                value,
                sigs: vec![sig],
            }))
        }
        Payload::GfPropose(pm) if pm.sig.signer == v => {
            let pos = pm.blocks.iter().position(|b| b.slot == pm.slot && b.proposer == v)?;
            let old = &pm.blocks[pos];
            let old_hash = old.hash();
            let txs = variant_txs(&old.txs, rng);
            let bsig = registry
                .adversary_sign(v, block_digest(old.slot, old.parent, v, &txs))
                .ok()?;
            let twin = GfBlock { slot: old.slot, parent: old.parent, proposer: v, txs, sig: bsig };
            let twin_hash = twin.hash();
            let mut blocks = pm.blocks.clone();
            blocks[pos] = twin;
            let head = if pm.head == old_hash { twin_hash } else { pm.head };
            let psig = registry
                .adversary_sign(v, gf_propose_digest(pm.slot, &blocks, &pm.votes, head))
                .ok()?;
            Some(Payload::GfPropose(GfProposeMsg {
                slot: pm.slot,
                blocks,
                votes: pm.votes.clone(),
                head,
                sig: psig,
            }))
        }
        Payload::GfVote(vt) if vt.sig.signer == v => {
            let sig = registry
                .adversary_sign(v, gf_vote_digest(vt.slot, GENESIS_HASH))
                .ok()?;
            Some(Payload::GfVote(GfVote { slot: vt.slot, block: GENESIS_HASH, sig }))
        }
        Payload::Heartbeat { ell, sig } if sig.signer == v => {
            let forged = registry.adversary_sign(v, heartbeat_digest(ell + 1)).ok()?;
            Some(Payload::Heartbeat { ell: ell + 1, sig: forged })
        }
        Payload::TxSigned { .. } => {
            let tx = Transaction::new(MARKER_BASE + rng.gen_range(0..u32::MAX as u64));
            let sig = registry.adversary_sign(v, txsig_digest(&tx)).ok()?;
            Some(Payload::TxSigned { tx, sig })
        }
        _ => None,
    }
}

/// Byzantine fuzzer. Corrupted validators run their honest roles; every
/// outbound message then passes a gauntlet of randomized deviations, and
/// fresh honest traffic gets retimed inside the synchrony window.
pub struct ByzFuzz {
    pub amend_pct: u32,
    pub drop_pct: u32,
    pub withhold_pct: u32,
    pub equivocate_pct: u32,
    pub spoof_pct: u32,
}

impl Default for ByzFuzz {
    fn default() -> Self {
        ByzFuzz { amend_pct: 60, drop_pct: 10, withhold_pct: 15, equivocate_pct: 25, spoof_pct: 10 }
    }
}

impl Strategy for ByzFuzz {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        for (idx, env) in ctx.fresh() {
            if ctx.rng.gen_range(0..100) < self.amend_pct {
                let d = ctx.rng.gen_range(env.sent_at + 1..=env.sent_at + ctx.delta);
                let _ = ctx.amend(idx, d);
            }
        }
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let parties: Vec<PartyId> = ctx.all_parties().to_vec();
        let round = ctx.round;
        for v in corrupt {
            let inbox = ctx.read_inbox(v);
            let ins = ctx.inputs_for(v);
            let out = ctx.validators[v as usize].step(round, &ins, &inbox, ctx.registry);
            for payload in out {
                if ctx.rng.gen_range(0..100) < self.drop_pct {
                    continue;
                }
                let fork = if ctx.rng.gen_range(0..100) < self.equivocate_pct {
                    fork_payload(&payload, v, ctx.registry, ctx.rng)
                } else {
                    None
                };
                for &to in &parties {
                    if to == PartyId::Validator(v) {
                        continue;
                    }
                    if ctx.rng.gen_range(0..100) < self.withhold_pct {
                        continue;
                    }
                    let chosen = match &fork {
                        Some(alt) if ctx.rng.gen::<bool>() => alt.clone(),
                        _ => payload.clone(),
                    };
                    let d = round + ctx.rng.gen_range(1..=2 * ctx.delta);
                    let _ = ctx.send(PartyId::Validator(v), to, chosen, d);
                }
                if ctx.rng.gen_range(0..100) < self.spoof_pct {
                    let label = PartyId::Client(0x00C1_0000 + ctx.rng.gen_range(0..1000));
                    let to = parties[ctx.rng.gen_range(0..parties.len())];
                    let _ = ctx.send(label, to, payload.clone(), round + 1);
                }
            }
        }
    }
}

/// Network-only adversary: corrupted validators behave honestly (their
/// output is forwarded faithfully at a random legal delay); the only power
/// exercised is retiming traffic within the synchrony window.
pub struct DelayFuzz {
    pub amend_pct: u32,
}

impl Default for DelayFuzz {
    fn default() -> Self {
        DelayFuzz { amend_pct: 100 }
    }
}

impl Strategy for DelayFuzz {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        for (idx, env) in ctx.fresh() {
            if ctx.rng.gen_range(0..100) < self.amend_pct {
                let d = ctx.rng.gen_range(env.sent_at + 1..=env.sent_at + ctx.delta);
                let _ = ctx.amend(idx, d);
            }
        }
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let parties: Vec<PartyId> = ctx.all_parties().to_vec();
        let round = ctx.round;
        for v in corrupt {
            let inbox = ctx.read_inbox(v);
            let ins = ctx.inputs_for(v);
            let out = ctx.validators[v as usize].step(round, &ins, &inbox, ctx.registry);
            for payload in out {
                for &to in &parties {
                    if to == PartyId::Validator(v) {
                        continue;
                    }
                    let d = round + ctx.rng.gen_range(1..=ctx.delta);
                    let _ = ctx.send(PartyId::Validator(v), to, payload.clone(), d);
                }
            }
        }
    }
}

/// Split-brain attack against quorum-certificate protocols.
///
/// With `f >= quorum` the corrupted validators mint two conflicting
/// certificates outright and serve one to each half of the client set.
/// Below the quorum they fall back to leader equivocation with selective
/// vote and certificate delivery, which a sound engine must absorb.
pub struct SplitBrain {
    pub quorum: u16,
    fired: bool,
}

impl SplitBrain {
    pub fn new(quorum: u16) -> Self {
        SplitBrain { quorum, fired: false }
    }
}

impl Strategy for SplitBrain {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let f = corrupt.len();
        let round = ctx.round;
        if f >= self.quorum as usize {
            // Forged-certificate mode: two worlds, one per client half.
            if self.fired {
                return;
            }
            self.fired = true;
            let mint = |registry: &mut SigRegistry, tx: Transaction| -> Certificate {
                let txs = vec![tx];
                let digest = commit_digest(1, &txs);
                let sigs = corrupt
                    .iter()
                    .take(self.quorum as usize)
                    .map(|&v| registry.adversary_sign(v, digest).unwrap())
                    .collect();
                Certificate { epoch: 1, txs, sigs }
            };
            let cert_a = mint(ctx.registry, Transaction::new(MARKER_BASE + 0xA));
            let cert_b = mint(ctx.registry, Transaction::new(MARKER_BASE + 0xB));
            let clients: Vec<ClientId> = ctx.client_ids.to_vec();
            let half = clients.len().div_ceil(2);
            let claim = PartyId::Validator(corrupt[0]);
            for (i, &c) in clients.iter().enumerate() {
                let cert = if i < half { cert_a.clone() } else { cert_b.clone() };
                let _ = ctx.send(claim, PartyId::Client(c), Payload::Certificate(cert), round + 1);
            }
            return;
        }
        // Equivocation mode.
        let n = ctx.validators.len() as u16;
        let honest: Vec<ValidatorId> =
            (0..n).filter(|x| !ctx.corrupt.contains(x)).collect();
        let half = honest.len().div_ceil(2);
        let parties: Vec<PartyId> = ctx.all_parties().to_vec();
        for v in corrupt {
            let inbox = ctx.read_inbox(v);
            let ins = ctx.inputs_for(v);
            let out = ctx.validators[v as usize].step(round, &ins, &inbox, ctx.registry);
            for payload in out {
                match &payload {
                    Payload::EngineProposal(_) | Payload::DsChain(_) => {
                        let fork = fork_payload(&payload, v, ctx.registry, ctx.rng);
                        let deliver = round + ctx.delta;
                        for (i, &h) in honest.iter().enumerate() {
                            let chosen = match &fork {
                                Some(alt) if i >= half => alt.clone(),
                                _ => payload.clone(),
                            };
                            let _ =
                                ctx.send(PartyId::Validator(v), PartyId::Validator(h), chosen, deliver);
                        }
                    }
                    Payload::EngineVote(_) | Payload::EngineQc(_) | Payload::EngineCommitSig(_) => {
                        // Selective: first honest half plus the client half A.
                        let clients: Vec<ClientId> = ctx.client_ids.to_vec();
                        let chalf = clients.len().div_ceil(2);
                        for &h in honest.iter().take(half) {
                            let _ = ctx.send(
                                PartyId::Validator(v),
                                PartyId::Validator(h),
                                payload.clone(),
                                round + 1,
                            );
                        }
                        for &c in clients.iter().take(chalf) {
                            let _ = ctx.send(
                                PartyId::Validator(v),
                                PartyId::Client(c),
                                payload.clone(),
                                round + 1,
                            );
                        }
                    }
                    Payload::EngineEvidence(_) => {}
                    _ => {
                        for &to in &parties {
                            if to != PartyId::Validator(v) {
                                let _ = ctx.send(
                                    PartyId::Validator(v),
                                    to,
                                    payload.clone(),
                                    round + ctx.delta,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Corrupted validators stay completely silent. The interesting part of the
/// four-worlds construction is the injection pattern (conflicting receipt
/// orders at different clients); the validator side only has to stall.
pub struct FourWorlds;

impl Strategy for FourWorlds {
    fn act(&mut self, _ctx: &mut AdvCtx<'_>) {}
}

/// One-shot leader equivocation: the round the corrupted leader would
/// propose, it sends conflicting proposals to the two halves of the honest
/// validator set, timed to land exactly at the vote round. All other
/// corrupted output is suppressed.
pub struct EquivocateLeader {
    fired: bool,
}

impl EquivocateLeader {
    pub fn new() -> Self {
        EquivocateLeader { fired: false }
    }
}

impl Default for EquivocateLeader {
    fn default() -> Self {
        Self::new()
    }
}

impl Strategy for EquivocateLeader {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let n = ctx.validators.len() as u16;
        let honest: Vec<ValidatorId> =
            (0..n).filter(|x| !ctx.corrupt.contains(x)).collect();
        let half = honest.len().div_ceil(2);
        let round = ctx.round;
        for v in corrupt {
            let inbox = ctx.read_inbox(v);
            let ins = ctx.inputs_for(v);
            let out = ctx.validators[v as usize].step(round, &ins, &inbox, ctx.registry);
            if self.fired {
                continue;
            }
            for payload in out {
                if let Payload::EngineProposal(p) = &payload {
                    if p.sig.signer != v {
                        continue;
                    }
                    let fork = fork_payload(&payload, v, ctx.registry, ctx.rng);
                    let deliver = round + ctx.delta;
                    for (i, &h) in honest.iter().enumerate() {
                        let chosen = match &fork {
                            Some(alt) if i >= half => alt.clone(),
                            _ => payload.clone(),
                        };
                        let _ =
                            ctx.send(PartyId::Validator(v), PartyId::Validator(h), chosen, deliver);
                    }
                    self.fired = true;
                }
            }
        }
    }
}

/// Forged transaction certification: the configured number of corrupted
/// validators sign one fabricated transaction and show those signatures to
/// a single client, which queues a transaction nobody else ever sees.
pub struct GhostCert {
    pub tx: Transaction,
    pub target: ClientId,
    pub at_round: Round,
    pub signers: usize,
    fired: bool,
}

impl GhostCert {
    pub fn new(tx: Transaction, target: ClientId, at_round: Round, signers: usize) -> Self {
        GhostCert { tx, target, at_round, signers, fired: false }
    }
}

impl Strategy for GhostCert {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        if self.fired || ctx.round != self.at_round {
            return;
        }
        self.fired = true;
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let round = ctx.round;
        for &v in corrupt.iter().take(self.signers) {
            if let Ok(sig) = ctx.registry.adversary_sign(v, txsig_digest(&self.tx)) {
                let _ = ctx.send(
                    PartyId::Validator(v),
                    PartyId::Client(self.target),
                    Payload::TxSigned { tx: self.tx.clone(), sig },
                    round + 1,
                );
            }
        }
    }
}

/// Liveness denial against vote-threshold confirmation: every slot, every
/// corrupted validator votes for genesis. Those votes inflate the slot's
/// vote total without adding weight to any child, so no child ever clears
/// the confirmation fraction and the chain stops being readable.
pub struct SleepyDa {
    pub delta: u64,
}

impl SleepyDa {
    pub fn new(delta: u64) -> Self {
        SleepyDa { delta }
    }
}

impl Strategy for SleepyDa {
    fn act(&mut self, ctx: &mut AdvCtx<'_>) {
        let slot_len = 3 * self.delta;
        let round = ctx.round;
        if round % slot_len != self.delta {
            return;
        }
        let slot = round / slot_len;
        let corrupt: Vec<ValidatorId> = ctx.corrupt.iter().copied().collect();
        let parties: Vec<PartyId> = ctx.all_parties().to_vec();
        for v in corrupt {
            if let Ok(sig) = ctx.registry.adversary_sign(v, gf_vote_digest(slot, GENESIS_HASH)) {
                let vote = Payload::GfVote(GfVote { slot, block: GENESIS_HASH, sig });
                for &to in &parties {
                    if to != PartyId::Validator(v) {
                        let _ = ctx.send(PartyId::Validator(v), to, vote.clone(), round + 1);
                    }
                }
            }
        }
    }
}
