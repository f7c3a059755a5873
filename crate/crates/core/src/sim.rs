//! World assembly and the deterministic round pipeline.
//!
//! Each round proceeds in fixed phases:
//!
//! 1. envelopes due this round materialize into inboxes;
//! 2. awake sets come from the precomputed schedules;
//! 3. environment injections reach their awake honest targets;
//! 4. awake honest parties step in id order, validators first; their
//!    broadcasts enter the network due at the full `Δ` bound;
//! 5. the adversary acts: it sees every fresh send (rushing), may retime
//!    them within the synchrony window, may drive its corrupted validators,
//!    and may inject its own messages for later rounds;
//! 6. every client's output log for the round is recorded (a sleeping
//!    client's log is carried forward unchanged).
//!
//! Inboxes stamp messages with the round actually read, so a waking party
//! cannot tell when buffered messages originally arrived.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crypto::SigRegistry;
use crate::dolev_strong::{DsClient, DsValidator};
use crate::engine::{EngineClient, ValidatorState};
use crate::gadgets::{
    FreezeClient, GossipQueueClient, HeartbeatQueueClient, PhiValidator, QuorumQueueClient,
    SignerValidator,
};
use crate::goldfish::{GfClient, GfValidator};
use crate::messages::{Payload, Received};
use crate::net::{Envelope, NetError, Network, Schedule};
use crate::trace::{Event, Origin, Trace};
use crate::types::{
    ClientId, ClientInteractivity, Log, ModelSelector, PartyId, Round, Transaction, ValidatorId,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("silent client c{client} attempted to send at round {round}")]
    SilentClientSend { client: ClientId, round: Round },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone)]
pub enum ValidatorRole {
    Engine(ValidatorState),
    Signer(SignerValidator),
    Ds(DsValidator),
    Gf(GfValidator),
    Phi(PhiValidator),
}

impl ValidatorRole {
    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &mut SigRegistry,
    ) -> Vec<Payload> {
        match self {
            ValidatorRole::Engine(v) => v.step(round, inputs, inbox, registry),
            ValidatorRole::Signer(v) => v.step(round, inputs, inbox, registry),
            ValidatorRole::Ds(v) => v.step(round, inputs, inbox, registry),
            ValidatorRole::Gf(v) => v.step(round, inputs, inbox, registry),
            ValidatorRole::Phi(v) => v.step(round, inputs, inbox, registry),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ClientRole {
    Engine(EngineClient),
    Freeze(FreezeClient),
    QuorumQueue(QuorumQueueClient),
    GossipQueue(GossipQueueClient),
    Ds(DsClient),
    Gf(GfClient),
    Phi(HeartbeatQueueClient),
}

impl ClientRole {
    pub fn step(
        &mut self,
        round: Round,
        inputs: &[Transaction],
        inbox: &[Received],
        registry: &SigRegistry,
    ) -> Vec<Payload> {
        match self {
            ClientRole::Engine(c) => {
                c.step(inbox, registry);
                Vec::new()
            }
            ClientRole::Freeze(c) => c.step(round, inputs, inbox, registry),
            ClientRole::QuorumQueue(c) => {
                c.step(round, inbox, registry);
                Vec::new()
            }
            ClientRole::GossipQueue(c) => c.step(round, inputs, inbox, registry),
            ClientRole::Ds(c) => c.step(round, inputs, inbox, registry),
            ClientRole::Gf(c) => {
                c.step(round, inbox, registry);
                Vec::new()
            }
            ClientRole::Phi(c) => {
                c.step(round, inbox, registry);
                Vec::new()
            }
        }
    }

    pub fn log_at(&self, round: Round) -> Log {
        match self {
            ClientRole::Engine(c) => c.log(),
            ClientRole::Freeze(c) => c.log(),
            ClientRole::QuorumQueue(c) => c.log_at(round),
            ClientRole::GossipQueue(c) => c.log_at(round),
            ClientRole::Ds(c) => c.log(),
            ClientRole::Gf(c) => c.log(),
            ClientRole::Phi(c) => c.log_at(round),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Injection {
    pub round: Round,
    pub tx: Transaction,
    pub targets: Vec<PartyId>,
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub n: u16,
    pub f: u16,
    pub delta: u64,
    pub horizon: Round,
    pub seed: u64,
    pub corrupt: BTreeSet<ValidatorId>,
    pub models: ModelSelector,
    pub protocol_label: String,
    pub declared_latency: Round,
    pub quorum: u16,
}

/// Everything the adversary can touch during its phase of a round.
pub struct AdvCtx<'a> {
    pub round: Round,
    pub delta: u64,
    pub corrupt: &'a BTreeSet<ValidatorId>,
    pub registry: &'a mut SigRegistry,
    pub rng: &'a mut ChaCha8Rng,
    pub validators: &'a mut [ValidatorRole],
    pub client_ids: &'a [ClientId],
    net: &'a mut Network,
    fresh: Vec<usize>,
    events: &'a mut Vec<Event>,
    injections_for: &'a BTreeMap<PartyId, Vec<Transaction>>,
    all_parties: &'a [PartyId],
}

impl<'a> AdvCtx<'a> {
    /// Fresh honest envelopes sent this round (rushing view).
    pub fn fresh(&self) -> Vec<(usize, Envelope)> {
        self.fresh.iter().map(|&i| (i, self.net.envelope(i).clone())).collect()
    }

    /// Retimes a fresh honest envelope within `[sent+1, sent+Δ]`.
    pub fn amend(&mut self, idx: usize, deliver_at: Round) -> Result<(), NetError> {
        self.net.amend(idx, deliver_at, self.delta)
    }

    /// Sends one adversary-origin message to one recipient.
    pub fn send(
        &mut self,
        claim: PartyId,
        to: PartyId,
        payload: Payload,
        deliver_at: Round,
    ) -> Result<(), NetError> {
        self.events.push(Event::Send {
            round: self.round,
            origin: Origin::Adversary,
            claim,
            digest: payload.digest(),
        });
        let res = self.net.send_adversarial(
            claim,
            to,
            payload,
            self.round,
            deliver_at,
            self.corrupt,
        );
        if res.is_err() {
            self.events.pop();
        }
        res
    }

    /// Broadcasts an adversary-origin message to every party except the
    /// claimed sender, due at `deliver_at`.
    pub fn broadcast(
        &mut self,
        claim: PartyId,
        payload: Payload,
        deliver_at: Round,
    ) -> Result<(), NetError> {
        for &to in self.all_parties {
            if to != claim {
                self.send(claim, to, payload.clone(), deliver_at)?;
            }
        }
        Ok(())
    }

    /// Drains a corrupted validator's inbox (receipt-stamped this round).
    pub fn read_inbox(&mut self, v: ValidatorId) -> Vec<Received> {
        self.net.read_inbox(PartyId::Validator(v), self.round)
    }

    /// Environment inputs addressed to a corrupted validator this round.
    /// The environment only feeds awake honest parties, so this is always
    /// empty under the standard pipeline; kept for strategy symmetry.
    pub fn inputs_for(&self, v: ValidatorId) -> Vec<Transaction> {
        self.injections_for
            .get(&PartyId::Validator(v))
            .cloned()
            .unwrap_or_default()
    }

    pub fn all_parties(&self) -> &[PartyId] {
        self.all_parties
    }
}

/// Per-round adversary behavior.
pub trait Strategy {
    fn act(&mut self, ctx: &mut AdvCtx<'_>);
}

/// The do-nothing adversary; honest messages keep their default `Δ` delay.
pub struct NullStrategy;

impl Strategy for NullStrategy {
    fn act(&mut self, _ctx: &mut AdvCtx<'_>) {}
}

pub struct World {
    pub cfg: WorldConfig,
    pub validators: Vec<ValidatorRole>,
    pub clients: Vec<(ClientId, ClientRole)>,
    pub validator_sched: Schedule,
    pub client_sched: Schedule,
    pub injections: Vec<Injection>,
    pub registry: SigRegistry,
    pub strategy: Box<dyn Strategy>,
}

/// Observed honest commit signatures: (epoch, commit digest) -> the signed
/// log and the honest validators that signed it. Basis for the post-hoc
/// certificate forging audit.
pub type CommitLedger = BTreeMap<(u64, u64), (Vec<Transaction>, BTreeSet<ValidatorId>)>;

#[derive(Debug)]
pub struct RunReport {
    pub trace: Trace,
    pub commit_ledger: CommitLedger,
    /// Ticks on which some heartbeat-weighted client saw an empty support
    /// denominator, summed over clients.
    pub phi_division_undefined: u64,
}

pub fn run(mut world: World) -> Result<RunReport, SimError> {
    use rand::SeedableRng;
    let cfg = world.cfg.clone();
    let n = cfg.n as usize;
    let client_ids: Vec<ClientId> = world.clients.iter().map(|(id, _)| *id).collect();
    let all_parties: Vec<PartyId> = (0..cfg.n)
        .map(PartyId::Validator)
        .chain(client_ids.iter().map(|&c| PartyId::Client(c)))
        .collect();

    let mut net = Network::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let rounds = cfg.horizon as usize + 1;
    let mut events: Vec<Event> = Vec::new();
    let mut validator_awake: Vec<Vec<bool>> = Vec::with_capacity(rounds);
    let mut client_awake: Vec<Vec<bool>> = Vec::with_capacity(rounds);
    let mut client_logs: Vec<Vec<Log>> = vec![Vec::with_capacity(rounds); world.clients.len()];
    let mut commit_ledger: CommitLedger = BTreeMap::new();

    let silent = cfg.models.client_interactivity == ClientInteractivity::Silent;

    for round in 0..=cfg.horizon {
        // Phase 1: deliveries.
        for env in net.deliver_due(round) {
            events.push(Event::Deliver {
                round,
                origin: env.origin,
                claim: env.claim,
                to: env.to,
                sent_at: env.sent_at,
                digest: env.payload.digest(),
            });
        }

        // Phase 2: awake sets; corrupt validators count as always awake.
        let mut v_row = world.validator_sched[round as usize].clone();
        for &c in &cfg.corrupt {
            v_row[c as usize] = true;
        }
        let c_row = world.client_sched[round as usize].clone();
        for v in 0..n {
            let was = round > 0 && validator_awake[round as usize - 1][v];
            if v_row[v] && !was {
                events.push(Event::Wake { round, party: PartyId::Validator(v as u16) });
            } else if !v_row[v] && was {
                events.push(Event::Sleep { round, party: PartyId::Validator(v as u16) });
            }
        }
        for (i, &cid) in client_ids.iter().enumerate() {
            let was = round > 0 && client_awake[round as usize - 1][i];
            if c_row[i] && !was {
                events.push(Event::Wake { round, party: PartyId::Client(cid) });
            } else if !c_row[i] && was {
                events.push(Event::Sleep { round, party: PartyId::Client(cid) });
            }
        }
        validator_awake.push(v_row.clone());
        client_awake.push(c_row.clone());

        // Phase 3: environment injections to awake honest targets.
        let mut inputs: BTreeMap<PartyId, Vec<Transaction>> = BTreeMap::new();
        for inj in world.injections.iter().filter(|i| i.round == round) {
            for &target in &inj.targets {
                let deliverable = match target {
                    PartyId::Validator(v) => {
                        (v as usize) < n
                            && !cfg.corrupt.contains(&v)
                            && v_row[v as usize]
                    }
                    PartyId::Client(c) => client_ids
                        .iter()
                        .position(|&x| x == c)
                        .map_or(false, |i| c_row[i]),
                };
                if deliverable {
                    events.push(Event::Input { round, tx: inj.tx.id, to: target });
                    inputs.entry(target).or_default().push(inj.tx.clone());
                }
            }
        }

        // Phase 4: honest awake parties step in id order.
        let mut fresh: Vec<usize> = Vec::new();
        for v in 0..cfg.n {
            if cfg.corrupt.contains(&v) || !v_row[v as usize] {
                continue;
            }
            let me = PartyId::Validator(v);
            let inbox = net.read_inbox(me, round);
            let ins = inputs.get(&me).cloned().unwrap_or_default();
            let out = world.validators[v as usize].step(round, &ins, &inbox, &mut world.registry);
            for payload in out {
                if let Payload::EngineCommitSig(cs) = &payload {
                    let key = (cs.epoch, crate::engine::commit_digest(cs.epoch, &cs.txs));
                    let entry = commit_ledger
                        .entry(key)
                        .or_insert_with(|| (cs.txs.clone(), BTreeSet::new()));
                    entry.1.insert(v);
                }
                events.push(Event::Send {
                    round,
                    origin: Origin::Honest,
                    claim: me,
                    digest: payload.digest(),
                });
                fresh.extend(net.send_honest(me, &all_parties, payload, round, cfg.delta));
            }
        }
        for (i, (cid, role)) in world.clients.iter_mut().enumerate() {
            if !c_row[i] {
                continue;
            }
            let me = PartyId::Client(*cid);
            let inbox = net.read_inbox(me, round);
            let ins = inputs.get(&me).cloned().unwrap_or_default();
            let out = role.step(round, &ins, &inbox, &world.registry);
            if !out.is_empty() && silent {
                return Err(SimError::SilentClientSend { client: *cid, round });
            }
            for payload in out {
                events.push(Event::Send {
                    round,
                    origin: Origin::Honest,
                    claim: me,
                    digest: payload.digest(),
                });
                fresh.extend(net.send_honest(me, &all_parties, payload, round, cfg.delta));
            }
        }

        // Phase 5: adversary.
        {
            let mut ctx = AdvCtx {
                round,
                delta: cfg.delta,
                corrupt: &cfg.corrupt,
                registry: &mut world.registry,
                rng: &mut rng,
                validators: &mut world.validators,
                client_ids: &client_ids,
                net: &mut net,
                fresh,
                events: &mut events,
                injections_for: &inputs,
                all_parties: &all_parties,
            };
            world.strategy.act(&mut ctx);
        }

        // Phase 6: record client logs.
        for (i, (_, role)) in world.clients.iter().enumerate() {
            let log = if c_row[i] {
                role.log_at(round)
            } else if round > 0 {
                client_logs[i][round as usize - 1].clone()
            } else {
                Log::genesis()
            };
            client_logs[i].push(log);
        }
    }

    let trace = Trace {
        n: cfg.n,
        f: cfg.f,
        delta: cfg.delta,
        horizon: cfg.horizon,
        seed: cfg.seed,
        models: cfg.models,
        corrupt: cfg.corrupt.clone(),
        clients: client_ids,
        protocol_label: cfg.protocol_label.clone(),
        declared_latency: cfg.declared_latency,
        events,
        validator_awake,
        client_awake,
        client_logs,
    };
    let phi_division_undefined = world
        .clients
        .iter()
        .map(|(_, role)| match role {
            ClientRole::Phi(c) => c.division_undefined,
            _ => 0,
        })
        .sum();
    Ok(RunReport { trace, commit_ledger, phi_division_undefined })
}

/// Post-hoc certificate forging audit. A certificate over `(epoch, log)` is
/// assemblable whenever the honest commit signatures observed on it, plus
/// one forged signature per corrupted validator, reach the quorum. Checks
/// every assemblable log against every honest client log at every round.
pub fn audit_certifiable(
    trace: &Trace,
    ledger: &CommitLedger,
    quorum: u16,
) -> Option<(Log, ClientId, Round, Log)> {
    let f = trace.corrupt.len();
    for ((_epoch, _digest), (txs, honest_signers)) in ledger {
        if honest_signers.len() + f < quorum as usize {
            continue;
        }
        let cert_log = Log::from_entries(txs.iter().map(|t| t.id).collect());
        for (idx, logs) in trace.client_logs.iter().enumerate() {
            for (round, log) in logs.iter().enumerate() {
                if !cert_log.is_consistent_with(log) {
                    return Some((
                        cert_log,
                        trace.clients[idx],
                        round as Round,
                        log.clone(),
                    ));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineParams;
    use crate::net::always_awake;
    use crate::types::{ClientSleepiness, TxId, ValidatorModel};

    fn engine_world(n: u16, quorum: u16, delta: u64, horizon: u64, clients: usize) -> World {
        let params = EngineParams { n, quorum, delta, gossip_txs: true };
        let cfg = WorldConfig {
            n,
            f: 0,
            delta,
            horizon,
            seed: 42,
            corrupt: BTreeSet::new(),
            models: ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Silent,
            },
            protocol_label: "engine".into(),
            declared_latency: 8 * delta,
            quorum,
        };
        World {
            cfg,
            validators: (0..n).map(|v| ValidatorRole::Engine(ValidatorState::new(v, params))).collect(),
            clients: (0..clients as u32)
                .map(|c| (c, ClientRole::Engine(EngineClient::new(quorum))))
                .collect(),
            validator_sched: always_awake(n as usize, horizon),
            client_sched: always_awake(clients, horizon),
            injections: vec![Injection {
                round: 0,
                tx: Transaction::new(1),
                targets: (0..n).map(PartyId::Validator).collect(),
            }],
            registry: SigRegistry::new(n, BTreeSet::new(), 42),
            strategy: Box::new(NullStrategy),
        }
    }

    /// Hand-checked happy path: n=4, quorum=3, Δ=2. The transaction is
    /// injected at round 0, leader 0 proposes at round 0, votes land at
    /// round 2, certificates at round 4, commit signatures at round 6,
    /// clients hold a full certificate at round 8.
    #[test]
    fn engine_commits_in_one_epoch_without_faults() {
        let world = engine_world(4, 3, 2, 12, 2);
        let report = run(world).unwrap();
        let t = &report.trace;
        let expected = Log::from_entries(vec![TxId(1)]);
        assert_eq!(*t.client_log(0, 7), Log::genesis());
        assert_eq!(*t.client_log(0, 8), expected);
        assert_eq!(*t.client_log(1, 11), expected);
        // Honest commit signatures from all four validators.
        assert_eq!(report.commit_ledger.len(), 1);
        let (_, signers) = report.commit_ledger.values().next().unwrap();
        assert_eq!(signers.len(), 4);
        assert!(audit_certifiable(t, &report.commit_ledger, 3).is_none());
    }

    #[test]
    fn engine_latency_within_declared_bound_under_max_delay() {
        // Worst-case delivery (the default) must still make the declared
        // latency: injected at round 0, visible by round 16 = 8*delta.
        let world = engine_world(6, 4, 2, 20, 3);
        let report = run(world).unwrap();
        let t = &report.trace;
        for idx in 0..3 {
            assert!(t.client_log(idx, 16).contains(TxId(1)));
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let a = run(engine_world(4, 3, 2, 12, 2)).unwrap().trace.hash();
        let b = run(engine_world(4, 3, 2, 12, 2)).unwrap().trace.hash();
        assert_eq!(a, b);
    }

    #[test]
    fn silent_model_rejects_sending_clients() {
        let mut world = engine_world(4, 3, 2, 12, 1);
        // A freeze client (which relays) under a silent model must trip.
        world.clients = vec![(0, ClientRole::Freeze(FreezeClient::new(2, 3)))];
        let err = run(world).unwrap_err();
        assert!(matches!(err, SimError::SilentClientSend { .. }));
    }

    #[test]
    fn sleeping_client_carries_log_forward_and_catches_up() {
        let mut world = engine_world(4, 3, 2, 16, 2);
        // Client 1 sleeps rounds 4..=9.
        for r in 4..10 {
            world.client_sched[r][1] = false;
        }
        let report = run(world).unwrap();
        let t = &report.trace;
        let expected = Log::from_entries(vec![TxId(1)]);
        // While asleep at round 8 (when client 0 learns), log stays genesis.
        assert_eq!(*t.client_log(1, 9), Log::genesis());
        // After waking at round 10, buffered commit sigs are read.
        assert_eq!(*t.client_log(1, 10), expected);
        assert_eq!(*t.client_log(0, 8), expected);
    }
}
