//! A longest-vote-expiry chain protocol for sleepy validators.
//!
//! Rounds group into slots of `3Δ`. A public random oracle draws one leader
//! per slot. Each slot runs propose / vote / merge:
//!
//! * `3Δt`: the leader combines its tree with its message buffer into an
//!   ephemeral view, runs fork choice over slot `t-1` votes, and proposes a
//!   block extending the winner, broadcasting its whole view alongside.
//! * `3Δt + Δ`: awake validators merge the leader's message permanently,
//!   re-run fork choice, and vote for the leader's block when it is valid
//!   and extends their fork-choice head, otherwise for the head itself.
//! * `3Δt + 2Δ`: everyone merges their buffer permanently. Clients then run
//!   fork choice over slot `t` votes and output the canonical blocks at
//!   least `κ` slots deep.
//!
//! Only votes from a single slot ever count (vote expiry), one per voter; a
//! voter caught voting two different blocks in one slot is discarded for
//! that slot outright. Messages received off-schedule sit in the buffer
//! until the next merge, which blunts selective showing: nothing an
//! adversary slips to one validator mid-slot affects that validator's vote
//! before everyone else merges the same material, and because proposals
//! rebroadcast counted votes, conflicting vote displays meet and cancel
//! within a slot of both sides proposing. A validator that just woke is
//! eligible for slot `t` only if it has been awake since `3Δt - Δ`, the
//! previous merge round, so its tree is complete before it speaks.
//!
//! Two fork-choice rules are provided. `MaxChild` descends to the heaviest
//! child (ties to lowest hash, zero-weight subtrees walked through to a
//! leaf). `Threshold` descends only into a child whose subtree holds at
//! least `φ` of the slot's counted voters and stops otherwise, trading
//! liveness under vote splits for an explicit supermajority behind every
//! confirmed block.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Digester, RandomOracle, SigRegistry, Signature};
use crate::messages::{Payload, Received};
use crate::types::{Log, Round, Transaction, TxId, ValidatorId};

/// Hash of the imaginary genesis block.
pub const GENESIS_HASH: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForkChoiceRule {
    MaxChild,
    Threshold,
}

#[derive(Debug, Clone, Copy)]
pub struct GfParams {
    pub n: u16,
    pub delta: u64,
    pub kappa: u64,
    /// Supermajority ratio for `Threshold`, as numerator / denominator.
    pub phi: (u64, u64),
    pub rule: ForkChoiceRule,
    pub seed: u64,
}

impl GfParams {
    pub fn slot_len(&self) -> u64 {
        3 * self.delta
    }

    pub fn leader(&self, slot: u64) -> ValidatorId {
        (RandomOracle::new(self.seed).query_u64(b"gf/leader", slot) % self.n as u64) as ValidatorId
    }

    /// Declared client latency: a transaction proposed in slot `t` is `κ`
    /// deep by slot `t+κ` and read out at that slot's merge round, plus one
    /// spare slot for a missed leader.
    pub fn declared_latency(&self) -> Round {
        (self.kappa + 2) * self.slot_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfBlock {
    pub slot: u64,
    pub parent: u64,
    pub proposer: ValidatorId,
    pub txs: Vec<Transaction>,
    pub sig: Signature,
}

pub fn block_digest(slot: u64, parent: u64, proposer: ValidatorId, txs: &[Transaction]) -> u64 {
    let mut d = Digester::new().bytes(b"gf/block").u64(slot).u64(parent).u16(proposer);
    d = d.u64(txs.len() as u64);
    for tx in txs {
        d = d.u64(tx.id.0).u64(tx.payload.len() as u64).bytes(&tx.payload);
    }
    d.finish()
}

impl GfBlock {
    pub fn hash(&self) -> u64 {
        block_digest(self.slot, self.parent, self.proposer, &self.txs)
    }

    pub fn valid(&self, params: &GfParams, registry: &SigRegistry) -> bool {
        self.proposer == params.leader(self.slot)
            && self.sig.signer == self.proposer
            && self.sig.message == self.hash()
            && registry.verify(&self.sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfVote {
    pub slot: u64,
    pub block: u64,
    pub sig: Signature,
}

pub fn vote_digest(slot: u64, block: u64) -> u64 {
    Digester::new().bytes(b"gf/vote").u64(slot).u64(block).finish()
}

impl GfVote {
    pub fn voter(&self) -> ValidatorId {
        self.sig.signer
    }

    pub fn valid(&self, registry: &SigRegistry) -> bool {
        self.sig.message == vote_digest(self.slot, self.block) && registry.verify(&self.sig)
    }
}

/// The leader's slot message: its merged view plus the new block's hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfProposeMsg {
    pub slot: u64,
    pub blocks: Vec<GfBlock>,
    pub votes: Vec<GfVote>,
    pub head: u64,
    pub sig: Signature,
}

pub fn propose_digest(slot: u64, blocks: &[GfBlock], votes: &[GfVote], head: u64) -> u64 {
    let mut d = Digester::new().bytes(b"gf/prop").u64(slot);
    d = d.u64(blocks.len() as u64);
    for b in blocks {
        d = d.u64(b.hash()).u64(b.sig.tag);
    }
    d = d.u64(votes.len() as u64);
    for v in votes {
        d = d.u64(vote_digest(v.slot, v.block)).u64(v.sig.tag).u16(v.voter());
    }
    d.u64(head).finish()
}

impl GfProposeMsg {
    pub fn valid(&self, params: &GfParams, registry: &SigRegistry) -> bool {
        self.sig.signer == params.leader(self.slot)
            && self.sig.message == propose_digest(self.slot, &self.blocks, &self.votes, self.head)
            && registry.verify(&self.sig)
    }
}

/// Block-and-vote tree: all validly signed blocks seen (parents resolved,
/// orphans parked), plus one counted vote per (slot, voter). A voter
/// observed voting two different blocks in one slot is an equivocator and
/// counts for nothing in that slot, permanently.
#[derive(Debug, Clone, Default)]
pub struct BvTree {
    blocks: BTreeMap<u64, GfBlock>,
    children: BTreeMap<u64, Vec<u64>>,
    votes: BTreeMap<u64, BTreeMap<ValidatorId, GfVote>>,
    equivocators: BTreeMap<u64, BTreeSet<ValidatorId>>,
    orphans: BTreeMap<u64, GfBlock>,
}

impl BvTree {
    pub fn contains(&self, hash: u64) -> bool {
        hash == GENESIS_HASH || self.blocks.contains_key(&hash)
    }

    pub fn block(&self, hash: u64) -> Option<&GfBlock> {
        self.blocks.get(&hash)
    }

    pub fn add_block(&mut self, b: GfBlock) {
        let hash = b.hash();
        if self.blocks.contains_key(&hash) || self.orphans.contains_key(&hash) {
            return;
        }
        if !self.contains(b.parent) {
            self.orphans.insert(hash, b);
            return;
        }
        self.children.entry(b.parent).or_default().push(hash);
        self.children.get_mut(&b.parent).unwrap().sort_unstable();
        self.children.get_mut(&b.parent).unwrap().dedup();
        self.blocks.insert(hash, b);
        // Newly available parent may unlock parked orphans, transitively.
        loop {
            let ready: Vec<u64> = self
                .orphans
                .iter()
                .filter(|(_, blk)| self.contains(blk.parent))
                .map(|(h, _)| *h)
                .collect();
            if ready.is_empty() {
                break;
            }
            for h in ready {
                let blk = self.orphans.remove(&h).unwrap();
                self.children.entry(blk.parent).or_default().push(h);
                self.children.get_mut(&blk.parent).unwrap().sort_unstable();
                self.children.get_mut(&blk.parent).unwrap().dedup();
                self.blocks.insert(h, blk);
            }
        }
    }

    pub fn add_vote(&mut self, v: &GfVote) {
        let voter = v.voter();
        if self.equivocators.get(&v.slot).is_some_and(|s| s.contains(&voter)) {
            return;
        }
        let slot_votes = self.votes.entry(v.slot).or_default();
        match slot_votes.get(&voter) {
            None => {
                slot_votes.insert(voter, v.clone());
            }
            Some(prev) if prev.block == v.block => {}
            Some(_) => {
                slot_votes.remove(&voter);
                self.equivocators.entry(v.slot).or_default().insert(voter);
            }
        }
    }

    pub fn votes_at(&self, slot: u64) -> BTreeMap<ValidatorId, u64> {
        self.votes
            .get(&slot)
            .map(|m| m.iter().map(|(voter, v)| (*voter, v.block)).collect())
            .unwrap_or_default()
    }

    pub fn all_blocks(&self) -> Vec<GfBlock> {
        self.blocks.values().cloned().collect()
    }

    /// Counted votes with their signatures, for rebroadcast in proposals.
    pub fn all_votes(&self) -> Vec<GfVote> {
        self.votes.values().flat_map(|m| m.values().cloned()).collect()
    }

    fn subtree(&self, root: u64) -> BTreeSet<u64> {
        let mut set = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(h) = stack.pop() {
            if set.insert(h) {
                if let Some(kids) = self.children.get(&h) {
                    stack.extend(kids.iter().copied());
                }
            }
        }
        set
    }

    pub fn ancestors(&self, mut hash: u64) -> Vec<u64> {
        let mut path = Vec::new();
        while hash != GENESIS_HASH {
            path.push(hash);
            match self.blocks.get(&hash) {
                Some(b) => hash = b.parent,
                None => break,
            }
        }
        path.reverse();
        path
    }

    pub fn extends(&self, descendant: u64, ancestor: u64) -> bool {
        if ancestor == GENESIS_HASH {
            return true;
        }
        let mut cur = descendant;
        while cur != GENESIS_HASH {
            if cur == ancestor {
                return true;
            }
            match self.blocks.get(&cur) {
                Some(b) => cur = b.parent,
                None => return false,
            }
        }
        false
    }

    /// Fork choice over one slot's counted votes. Returns the canonical path
    /// from the first post-genesis block to the chosen head (possibly empty).
    pub fn fork_choice(
        &self,
        slot_votes: &BTreeMap<ValidatorId, u64>,
        rule: ForkChoiceRule,
        phi: (u64, u64),
    ) -> Vec<u64> {
        let countable: Vec<(ValidatorId, u64)> = slot_votes
            .iter()
            .filter(|(_, b)| self.contains(**b))
            .map(|(v, b)| (*v, *b))
            .collect();
        let total = countable.len() as u64;
        if matches!(rule, ForkChoiceRule::Threshold) && total == 0 {
            return Vec::new();
        }
        let mut path = Vec::new();
        let mut cur = GENESIS_HASH;
        loop {
            let kids = match self.children.get(&cur) {
                Some(k) if !k.is_empty() => k.clone(),
                _ => break,
            };
            let weigh = |child: u64| -> u64 {
                let sub = self.subtree(child);
                countable.iter().filter(|(_, b)| sub.contains(b)).count() as u64
            };
            let next = match rule {
                ForkChoiceRule::MaxChild => kids
                    .iter()
                    .map(|&k| (std::cmp::Reverse(weigh(k)), k))
                    .min()
                    .map(|(_, k)| k),
                ForkChoiceRule::Threshold => kids
                    .iter()
                    .map(|&k| (weigh(k), k))
                    .filter(|(w, _)| w * phi.1 >= phi.0 * total)
                    .map(|(w, k)| (std::cmp::Reverse(w), k))
                    .min()
                    .map(|(_, k)| k),
            };
            match next {
                Some(k) => {
                    path.push(k);
                    cur = k;
                }
                None => break,
            }
        }
        path
    }
}

/// Awake-since tracking shared by validators and clients: a gap in observed
/// rounds means the party slept and must re-earn eligibility.
#[derive(Debug, Clone, Default)]
struct Presence {
    prev_round: Option<Round>,
    awake_since: Round,
}

impl Presence {
    fn observe(&mut self, round: Round) {
        match self.prev_round {
            Some(p) if p + 1 == round => {}
            _ => self.awake_since = round,
        }
        self.prev_round = Some(round);
    }

    fn eligible(&self, params: &GfParams, slot: u64) -> bool {
        let bar = (slot * params.slot_len()).saturating_sub(params.delta);
        self.awake_since <= bar
    }
}

#[derive(Debug, Clone)]
pub struct GfValidator {
    pub me: ValidatorId,
    pub params: GfParams,
    pub tree: BvTree,
    buf_blocks: Vec<GfBlock>,
    buf_votes: Vec<GfVote>,
    /// Leader messages for the current slot, gathered as they arrive in
    /// `(3Δt, 3Δt+Δ]` and merged permanently at the vote phase.
    leader_msgs: Vec<GfProposeMsg>,
    seen: BTreeSet<TxId>,
    pool: BTreeMap<TxId, Transaction>,
    presence: Presence,
}

impl GfValidator {
    pub fn new(me: ValidatorId, params: GfParams) -> Self {
        GfValidator {
            me,
            params,
            tree: BvTree::default(),
            buf_blocks: Vec::new(),
            buf_votes: Vec::new(),
            leader_msgs: Vec::new(),
            seen: BTreeSet::new(),
            pool: BTreeMap::new(),
            presence: Presence::default(),
        }
    }

    fn feed_tx(&mut self, tx: &Transaction, fresh: &mut Vec<Transaction>) {
        if self.seen.insert(tx.id) {
            self.pool.insert(tx.id, tx.clone());
            fresh.push(tx.clone());
        }
    }

    fn ephemeral_view(&self) -> BvTree {
        let mut view = self.tree.clone();
        for b in &self.buf_blocks {
            view.add_block(b.clone());
        }
        for v in &self.buf_votes {
            view.add_vote(v);
        }
        view
    }

    fn chain_txs(view: &BvTree, head: u64) -> BTreeSet<TxId> {
        view.ancestors(head)
            .iter()
            .filter_map(|h| view.block(*h))
            .flat_map(|b| b.txs.iter().map(|t| t.id))
            .collect()
    }

    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        self.presence.observe(round);
        let mut out = Vec::new();
        let mut fresh = Vec::new();
        let slot = round / self.params.slot_len();
        let phase = round % self.params.slot_len();
        if phase == 0 {
            self.leader_msgs.clear();
        }

        for tx in inputs {
            self.feed_tx(tx, &mut fresh);
        }
        for msg in inbox {
            match &msg.payload {
                Payload::TxGossip(tx) | Payload::TxSigned { tx, .. } => {
                    self.feed_tx(tx, &mut fresh)
                }
                Payload::GfPropose(pm) => {
                    if !pm.valid(&self.params, registry) {
                        continue;
                    }
                    let mut clean = GfProposeMsg {
                        slot: pm.slot,
                        blocks: Vec::new(),
                        votes: Vec::new(),
                        head: pm.head,
                        sig: pm.sig,
                    };
                    for b in &pm.blocks {
                        if b.valid(&self.params, registry) {
                            for tx in &b.txs {
                                self.feed_tx(tx, &mut fresh);
                            }
                            self.buf_blocks.push(b.clone());
                            clean.blocks.push(b.clone());
                        }
                    }
                    for v in &pm.votes {
                        if v.valid(registry) {
                            self.buf_votes.push(v.clone());
                            clean.votes.push(v.clone());
                        }
                    }
                    if pm.slot == slot {
                        self.leader_msgs.push(clean);
                    }
                }
                Payload::GfVote(v) => {
                    if v.valid(registry) {
                        self.buf_votes.push(v.clone());
                    }
                }
                _ => {}
            }
        }

        let eligible = self.presence.eligible(&self.params, slot);

        if phase == 0 && self.params.leader(slot) == self.me && eligible {
            let view = self.ephemeral_view();
            let prev_votes = if slot == 0 { BTreeMap::new() } else { view.votes_at(slot - 1) };
            let path = view.fork_choice(&prev_votes, self.params.rule, self.params.phi);
            let head = path.last().copied().unwrap_or(GENESIS_HASH);
            let have = Self::chain_txs(&view, head);
            let txs: Vec<Transaction> = self
                .pool
                .iter()
                .filter(|(id, _)| !have.contains(id))
                .map(|(_, tx)| tx.clone())
                .collect();
            let digest = block_digest(slot, head, self.me, &txs);
            let sig = registry.sign(self.me, digest);
            let block = GfBlock { slot, parent: head, proposer: self.me, txs, sig };
            let hash = block.hash();
            self.tree.add_block(block.clone());
            let mut blocks = view.all_blocks();
            blocks.push(block);
            let votes = view.all_votes();
            let psig = registry.sign(self.me, propose_digest(slot, &blocks, &votes, hash));
            out.push(Payload::GfPropose(GfProposeMsg { slot, blocks, votes, head: hash, sig: psig }));
        }

        if phase == self.params.delta && eligible {
            for pm in std::mem::take(&mut self.leader_msgs) {
                for b in pm.blocks {
                    self.tree.add_block(b);
                }
                for v in &pm.votes {
                    self.tree.add_vote(v);
                }
            }
            let prev_votes = if slot == 0 { BTreeMap::new() } else { self.tree.votes_at(slot - 1) };
            let path = self.tree.fork_choice(&prev_votes, self.params.rule, self.params.phi);
            let head = path.last().copied().unwrap_or(GENESIS_HASH);
            let leader = self.params.leader(slot);
            let candidate = self
                .tree
                .blocks
                .values()
                .filter(|b| b.slot == slot && b.proposer == leader && self.tree.extends(b.hash(), head))
                .map(|b| b.hash())
                .min();
            let target = candidate.unwrap_or(head);
            let sig = registry.sign(self.me, vote_digest(slot, target));
            let vote = GfVote { slot, block: target, sig };
            self.tree.add_vote(&vote);
            out.push(Payload::GfVote(vote));
        }

        if phase == 2 * self.params.delta {
            for b in std::mem::take(&mut self.buf_blocks) {
                self.tree.add_block(b);
            }
            for v in std::mem::take(&mut self.buf_votes) {
                self.tree.add_vote(&v);
            }
        }

        for tx in fresh {
            out.push(Payload::TxGossip(tx));
        }
        out
    }
}

/// Client role: mirrors the tree from broadcasts and confirms `κ`-deep
/// canonical blocks at each merge round.
#[derive(Debug, Clone)]
pub struct GfClient {
    pub params: GfParams,
    pub tree: BvTree,
    buf_blocks: Vec<GfBlock>,
    buf_votes: Vec<GfVote>,
    presence: Presence,
    log: Log,
}

impl GfClient {
    pub fn new(params: GfParams) -> Self {
        GfClient {
            params,
            tree: BvTree::default(),
            buf_blocks: Vec::new(),
            buf_votes: Vec::new(),
            presence: Presence::default(),
            log: Log::genesis(),
        }
    }

    pub fn log(&self) -> Log {
        self.log.clone()
    }

    pub fn step(&mut self, round: Round, inbox: &[Received], registry: &SigRegistry) {
        self.presence.observe(round);
        let slot = round / self.params.slot_len();
        let phase = round % self.params.slot_len();
        for msg in inbox {
            match &msg.payload {
                Payload::GfPropose(pm) => {
                    if !pm.valid(&self.params, registry) {
                        continue;
                    }
                    for b in &pm.blocks {
                        if b.valid(&self.params, registry) {
                            self.buf_blocks.push(b.clone());
                        }
                    }
                    for v in &pm.votes {
                        if v.valid(registry) {
                            self.buf_votes.push(v.clone());
                        }
                    }
                }
                Payload::GfVote(v) => {
                    if v.valid(registry) {
                        self.buf_votes.push(v.clone());
                    }
                }
                _ => {}
            }
        }
        if phase == 2 * self.params.delta {
            for b in std::mem::take(&mut self.buf_blocks) {
                self.tree.add_block(b);
            }
            for v in std::mem::take(&mut self.buf_votes) {
                self.tree.add_vote(&v);
            }
            if self.presence.eligible(&self.params, slot) {
                let votes = self.tree.votes_at(slot);
                let path = self.tree.fork_choice(&votes, self.params.rule, self.params.phi);
                let mut log = Log::genesis();
                if slot >= self.params.kappa {
                    let confirm_slot = slot - self.params.kappa;
                    for hash in path {
                        let b = self.tree.block(hash).expect("path blocks are in tree");
                        if b.slot > confirm_slot {
                            break;
                        }
                        for tx in &b.txs {
                            log.append(tx.id);
                        }
                    }
                }
                self.log = log;
            }
        }
    }
}
