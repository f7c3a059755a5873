//! Scenario configuration and orchestration: flat key=value configs, world
//! construction for every protocol/gadget pairing, schedule generation with
//! per-protocol liveness conditioning, seed sweeps with CSV reporting, and
//! the model-hierarchy cross-check.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{
    ByzFuzz, DelayFuzz, EquivocateLeader, FourWorlds, GhostCert, SleepyDa, SplitBrain,
};
use crate::crypto::SigRegistry;
use crate::dolev_strong::{DsClient, DsParams, DsValidator};
use crate::engine::{EngineClient, EngineParams, ValidatorState};
use crate::gadgets::{
    FreezeClient, GossipQueueClient, HeartbeatQueueClient, PhiValidator, QuorumQueueClient,
    SignerValidator,
};
use crate::goldfish::{ForkChoiceRule, GfClient, GfParams, GfValidator};
use crate::net::{always_awake, ensure_min_awake, random_sleepy, Schedule};
use crate::sim::{
    run, ClientRole, CommitLedger, Injection, NullStrategy, SimError, Strategy, ValidatorRole,
    World, WorldConfig,
};
use crate::trace::Trace;
use crate::types::{
    spread_corrupt_set, ClientInteractivity, ClientSleepiness, ModelSelector, PartyId, Round,
    Transaction, ValidatorModel,
};
use crate::verdict::{check, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Quorum lockstep engine with direct certificate clients.
    Int,
    /// Engine plus the certificate-freezing client.
    Frz,
    /// Engine plus the signature-quorum queue client (silent).
    LiveQ,
    /// Engine plus the gossip queue client (communicating).
    LiveStar,
    /// Sequenced broadcast instances (requires client relays).
    Ds,
    /// Vote-based chain protocol with direct chain clients.
    Gf,
    /// Chain protocol plus the heartbeat-weighted queue client.
    LivePhi,
}

impl Protocol {
    pub fn parse(s: &str) -> Option<Protocol> {
        Some(match s {
            "int" => Protocol::Int,
            "frz" => Protocol::Frz,
            "liveq" => Protocol::LiveQ,
            "livestar" => Protocol::LiveStar,
            "ds" => Protocol::Ds,
            "gf" => Protocol::Gf,
            "livephi" => Protocol::LivePhi,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Int => "int",
            Protocol::Frz => "frz",
            Protocol::LiveQ => "liveq",
            Protocol::LiveStar => "livestar",
            Protocol::Ds => "ds",
            Protocol::Gf => "gf",
            Protocol::LivePhi => "livephi",
        }
    }

    pub fn engine_family(&self) -> bool {
        matches!(self, Protocol::Int | Protocol::Frz | Protocol::LiveQ | Protocol::LiveStar)
    }

    pub fn goldfish_family(&self) -> bool {
        matches!(self, Protocol::Gf | Protocol::LivePhi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    None,
    ByzFuzz,
    DelayFuzz,
    SplitBrain,
    FourWorlds,
    EquivocateLeader,
    GhostCert,
    SleepyDa,
}

impl AttackKind {
    pub fn parse(s: &str) -> Option<AttackKind> {
        Some(match s {
            "none" => AttackKind::None,
            "byzfuzz" => AttackKind::ByzFuzz,
            "delayfuzz" => AttackKind::DelayFuzz,
            "split_brain" => AttackKind::SplitBrain,
            "four_worlds" => AttackKind::FourWorlds,
            "equivocate_leader" => AttackKind::EquivocateLeader,
            "ghost_cert" => AttackKind::GhostCert,
            "sleepy_da" => AttackKind::SleepyDa,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::ByzFuzz => "byzfuzz",
            AttackKind::DelayFuzz => "delayfuzz",
            AttackKind::SplitBrain => "split_brain",
            AttackKind::FourWorlds => "four_worlds",
            AttackKind::EquivocateLeader => "equivocate_leader",
            AttackKind::GhostCert => "ghost_cert",
            AttackKind::SleepyDa => "sleepy_da",
        }
    }

    fn scripted(&self) -> bool {
        !matches!(self, AttackKind::None | AttackKind::ByzFuzz | AttackKind::DelayFuzz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectTarget {
    Validators,
    Clients,
    /// Exactly two transactions with conflicting id and receipt order, one
    /// per client: the first client gets the higher id.
    Pair,
}

#[derive(Debug, Clone, Copy)]
pub struct InjectSpec {
    pub count: u32,
    pub start: Round,
    /// Rounds between injections; 0 picks a protocol-appropriate cadence.
    pub gap: Round,
    pub to: InjectTarget,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub n: u16,
    pub f: u16,
    pub delta: u64,
    /// Engine vote/commit quorum; 0 resolves to `floor(2n/3)`, at least 1.
    pub quorum: u16,
    /// Signature count before the quorum-queue client queues a transaction.
    pub qthresh: u16,
    pub kappa: u64,
    pub phi: (u64, u64),
    pub rule: ForkChoiceRule,
    pub clients: u32,
    pub models: ModelSelector,
    pub seed: u64,
    /// Last simulated round; 0 resolves from the injection schedule.
    pub horizon: Round,
    pub attack: AttackKind,
    pub awake_pct: u32,
    pub inject: InjectSpec,
}

impl ScenarioConfig {
    pub fn for_protocol(p: Protocol) -> ScenarioConfig {
        let models = match p {
            Protocol::Int => ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Silent,
            },
            Protocol::Frz => ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::Sleepy,
                client_interactivity: ClientInteractivity::Communicating,
            },
            Protocol::LiveQ => ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Silent,
            },
            Protocol::LiveStar => ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Communicating,
            },
            Protocol::Ds => ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Communicating,
            },
            Protocol::Gf | Protocol::LivePhi => ModelSelector {
                validators: ValidatorModel::Sleepy,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Silent,
            },
        };
        ScenarioConfig {
            protocol: p,
            n: match p {
                Protocol::Ds => 4,
                Protocol::Gf | Protocol::LivePhi => 8,
                _ => 6,
            },
            f: 0,
            delta: 2,
            quorum: 0,
            qthresh: 2,
            kappa: match p {
                Protocol::LivePhi => 2,
                _ => 4,
            },
            phi: (5, 8),
            rule: match p {
                Protocol::LivePhi => ForkChoiceRule::MaxChild,
                _ => ForkChoiceRule::Threshold,
            },
            clients: 3,
            models,
            seed: 7,
            horizon: 0,
            attack: AttackKind::None,
            awake_pct: 75,
            inject: InjectSpec { count: 3, start: 0, gap: 0, to: InjectTarget::Validators },
        }
    }

    /// Parses a flat `key=value` config (one pair per line, `#` comments).
    /// The `protocol` key selects the defaults every other key overrides.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let pairs: Vec<(usize, &str, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                l.split_once('=')
                    .map(|(k, v)| (i, k.trim(), v.trim()))
                    .ok_or(ConfigError::Parse { line: i, reason: "expected key=value".into() })
            })
            .collect::<Result<_, _>>()?;
        let proto = pairs
            .iter()
            .find(|(_, k, _)| *k == "protocol")
            .ok_or_else(|| invalid("protocol", "missing"))?;
        let protocol = Protocol::parse(proto.2)
            .ok_or_else(|| invalid("protocol", format!("unknown protocol `{}`", proto.2)))?;
        let mut cfg = ScenarioConfig::for_protocol(protocol);
        for (line, key, value) in pairs {
            let bad = |what: &str| ConfigError::Parse {
                line,
                reason: format!("bad value `{value}` for `{key}` ({what})"),
            };
            match key {
                "protocol" => {}
                "n" => cfg.n = value.parse().map_err(|_| bad("u16"))?,
                "f" => cfg.f = value.parse().map_err(|_| bad("u16"))?,
                "delta" => cfg.delta = value.parse().map_err(|_| bad("u64"))?,
                "quorum" => cfg.quorum = value.parse().map_err(|_| bad("u16"))?,
                "qthresh" => cfg.qthresh = value.parse().map_err(|_| bad("u16"))?,
                "kappa" => cfg.kappa = value.parse().map_err(|_| bad("u64"))?,
                "phi_num" => cfg.phi.0 = value.parse().map_err(|_| bad("u64"))?,
                "phi_den" => cfg.phi.1 = value.parse().map_err(|_| bad("u64"))?,
                "rule" => {
                    cfg.rule = match value {
                        "maxchild" => ForkChoiceRule::MaxChild,
                        "threshold" => ForkChoiceRule::Threshold,
                        _ => return Err(bad("maxchild|threshold")),
                    }
                }
                "clients" => cfg.clients = value.parse().map_err(|_| bad("u32"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("u64"))?,
                "horizon" => cfg.horizon = value.parse().map_err(|_| bad("u64"))?,
                "attack" => {
                    cfg.attack = AttackKind::parse(value).ok_or_else(|| bad("attack name"))?
                }
                "awake_pct" => cfg.awake_pct = value.parse().map_err(|_| bad("u32"))?,
                "validator_model" => {
                    cfg.models.validators = match value {
                        "always_on" => ValidatorModel::AlwaysOn,
                        "sleepy" => ValidatorModel::Sleepy,
                        _ => return Err(bad("always_on|sleepy")),
                    }
                }
                "client_sleepiness" => {
                    cfg.models.client_sleepiness = match value {
                        "always_on" => ClientSleepiness::AlwaysOn,
                        "sleepy" => ClientSleepiness::Sleepy,
                        _ => return Err(bad("always_on|sleepy")),
                    }
                }
                "client_interactivity" => {
                    cfg.models.client_interactivity = match value {
                        "silent" => ClientInteractivity::Silent,
                        "communicating" => ClientInteractivity::Communicating,
                        _ => return Err(bad("silent|communicating")),
                    }
                }
                "inject_count" => cfg.inject.count = value.parse().map_err(|_| bad("u32"))?,
                "inject_start" => cfg.inject.start = value.parse().map_err(|_| bad("u64"))?,
                "inject_gap" => cfg.inject.gap = value.parse().map_err(|_| bad("u64"))?,
                "inject_to" => {
                    cfg.inject.to = match value {
                        "validators" => InjectTarget::Validators,
                        "clients" => InjectTarget::Clients,
                        "pair" => InjectTarget::Pair,
                        _ => return Err(bad("validators|clients|pair")),
                    }
                }
                _ => {
                    return Err(ConfigError::Parse {
                        line,
                        reason: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn engine_quorum(&self) -> u16 {
        if self.quorum != 0 {
            self.quorum
        } else {
            ((2 * self.n) / 3).max(1)
        }
    }

    fn gf_params(&self) -> GfParams {
        GfParams {
            n: self.n,
            delta: self.delta,
            kappa: self.kappa,
            phi: self.phi,
            rule: self.rule,
            seed: self.seed,
        }
    }

    /// Latency of the underlying validator protocol.
    pub fn u_int(&self) -> Round {
        match self.protocol {
            Protocol::Int | Protocol::Frz | Protocol::LiveQ | Protocol::LiveStar => {
                8 * self.delta
            }
            Protocol::Ds => 4 * self.n as u64 * self.delta,
            Protocol::Gf | Protocol::LivePhi => (self.kappa + 2) * 3 * self.delta,
        }
    }

    /// End-to-end declared latency, gadget overhead included.
    pub fn declared_latency(&self) -> Round {
        let u = self.u_int();
        match self.protocol {
            Protocol::Int | Protocol::Ds | Protocol::Gf => u,
            Protocol::Frz => u + self.delta,
            Protocol::LiveQ | Protocol::LiveStar => u + 2 * self.delta,
            Protocol::LivePhi => u + 3 * self.delta,
        }
    }

    pub fn inject_gap(&self) -> Round {
        if self.inject.gap != 0 {
            return self.inject.gap;
        }
        match self.protocol {
            Protocol::Int | Protocol::Frz | Protocol::LiveQ | Protocol::LiveStar => {
                4 * self.delta
            }
            Protocol::Ds => 2 * self.n as u64 * self.delta,
            Protocol::Gf | Protocol::LivePhi => 6 * self.delta,
        }
    }

    pub fn resolved_horizon(&self) -> Round {
        if self.horizon != 0 {
            return self.horizon;
        }
        let last = self.inject.start + self.inject.count.max(1) as u64 * self.inject_gap();
        last + self.declared_latency() + self.u_int() / 2 + 4 * self.delta
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if self.f > self.n {
            return Err(invalid("f", format!("{} exceeds n={}", self.f, self.n)));
        }
        if self.delta == 0 {
            return Err(invalid("delta", "must be at least 1"));
        }
        if self.clients == 0 {
            return Err(invalid("clients", "need at least one client"));
        }
        if self.awake_pct > 100 {
            return Err(invalid("awake_pct", "percentage above 100"));
        }
        if self.protocol.engine_family() && self.engine_quorum() > self.n {
            return Err(invalid("quorum", "quorum above n"));
        }
        if self.protocol == Protocol::LiveQ && (self.qthresh == 0 || self.qthresh > self.n) {
            return Err(invalid("qthresh", "must be in 1..=n"));
        }
        if self.protocol.goldfish_family() {
            if self.kappa == 0 {
                return Err(invalid("kappa", "must be at least 1"));
            }
            if self.phi.1 == 0 || self.phi.0 > self.phi.1 {
                return Err(invalid("phi_num", "need phi_num <= phi_den, phi_den > 0"));
            }
        }
        if matches!(self.protocol, Protocol::Frz | Protocol::LiveStar)
            && self.models.client_interactivity != ClientInteractivity::Communicating
        {
            return Err(invalid(
                "client_interactivity",
                format!("{} clients must be communicating", self.protocol.label()),
            ));
        }
        match self.attack {
            AttackKind::SleepyDa => {
                if self.protocol != Protocol::Gf {
                    return Err(invalid("attack", "sleepy_da targets protocol gf"));
                }
                if self.models.validators != ValidatorModel::Sleepy {
                    return Err(invalid(
                        "attack",
                        "sleepy_da requires the sleepy validator model",
                    ));
                }
            }
            AttackKind::GhostCert => {
                if self.protocol != Protocol::LiveQ {
                    return Err(invalid("attack", "ghost_cert targets protocol liveq"));
                }
                if (self.f as usize) < self.qthresh as usize {
                    return Err(invalid("f", "ghost_cert needs at least qthresh corruptions"));
                }
            }
            AttackKind::EquivocateLeader => {
                if !self.protocol.engine_family() {
                    return Err(invalid("attack", "equivocate_leader targets the engine"));
                }
                if self.f == 0 {
                    return Err(invalid("f", "equivocate_leader needs a corrupted leader"));
                }
            }
            AttackKind::SplitBrain => {
                if !(self.protocol.engine_family() || self.protocol == Protocol::Ds) {
                    return Err(invalid("attack", "split_brain targets engine or ds"));
                }
            }
            AttackKind::FourWorlds => {
                if self.inject.to != InjectTarget::Pair {
                    return Err(invalid("inject_to", "four_worlds requires inject_to=pair"));
                }
                if self.models.client_interactivity != ClientInteractivity::Communicating {
                    return Err(invalid("attack", "four_worlds needs communicating clients"));
                }
                if self.clients < 2 {
                    return Err(invalid("clients", "four_worlds needs two clients"));
                }
            }
            _ => {}
        }
        if self.inject.to == InjectTarget::Pair && self.clients < 2 {
            return Err(invalid("clients", "pair injection needs two clients"));
        }
        Ok(())
    }
}

pub fn build_injections(cfg: &ScenarioConfig) -> Vec<Injection> {
    match cfg.inject.to {
        InjectTarget::Pair => {
            // Conflicting receipt orders: the first client hears the higher
            // id first, the second client the lower id.
            vec![
                Injection {
                    round: cfg.inject.start,
                    tx: Transaction::new(104),
                    targets: vec![PartyId::Client(0)],
                },
                Injection {
                    round: cfg.inject.start,
                    tx: Transaction::new(101),
                    targets: vec![PartyId::Client(1)],
                },
            ]
        }
        to => {
            let targets: Vec<PartyId> = match to {
                InjectTarget::Validators => (0..cfg.n).map(PartyId::Validator).collect(),
                _ => (0..cfg.clients).map(PartyId::Client).collect(),
            };
            let gap = cfg.inject_gap();
            (0..cfg.inject.count)
                .map(|i| Injection {
                    round: cfg.inject.start + i as u64 * gap,
                    tx: Transaction::new(101 + i as u64),
                    targets: targets.clone(),
                })
                .collect()
        }
    }
}

/// Sleepy goldfish schedule at slot granularity: parties transition only at
/// slot boundaries, an awake slot implies the previous slot was also awake
/// (so the joining rule is satisfied whenever a party participates), honest
/// slot leaders are awake for their slot and the one before, and every slot
/// keeps at least one honest validator awake across the preceding pair.
fn gf_conditioned_schedule(
    cfg: &ScenarioConfig,
    honest: &[usize],
    horizon: Round,
    rng: &mut ChaCha8Rng,
) -> Schedule {
    use rand::Rng;
    let params = cfg.gf_params();
    let slot_len = 3 * cfg.delta;
    let slots = (horizon / slot_len) as usize + 2;
    let n = cfg.n as usize;
    let mut awake = vec![vec![true; slots]; n];
    for &h in honest {
        for s in 0..slots {
            awake[h][s] = rng.gen_range(0..100) < cfg.awake_pct;
        }
    }
    // An awake slot needs the previous slot awake too, for eligibility.
    for row in awake.iter_mut() {
        for s in (1..slots).rev() {
            if row[s] {
                row[s - 1] = true;
            }
        }
    }
    for s in 0..slots {
        let leader = params.leader(s as u64) as usize;
        if honest.contains(&leader) {
            awake[leader][s] = true;
            if s > 0 {
                awake[leader][s - 1] = true;
            }
        }
        if !honest.iter().any(|&h| awake[h][s] && (s == 0 || awake[h][s - 1])) {
            let pick = honest[rng.gen_range(0..honest.len())];
            awake[pick][s] = true;
            if s > 0 {
                awake[pick][s - 1] = true;
            }
        }
    }
    (0..=horizon)
        .map(|r| {
            let s = (r / slot_len) as usize;
            (0..n).map(|v| awake[v][s]).collect()
        })
        .collect()
}

fn build_schedules(cfg: &ScenarioConfig, horizon: Round, rng: &mut ChaCha8Rng) -> (Schedule, Schedule) {
    let n = cfg.n as usize;
    let corrupt = spread_corrupt_set(cfg.n, cfg.f);
    let honest: Vec<usize> =
        (0..n).filter(|v| !corrupt.contains(&(*v as u16))).collect();
    let validators = if cfg.models.validators == ValidatorModel::AlwaysOn
        || cfg.attack.scripted()
        || cfg.awake_pct >= 100
        || honest.is_empty()
    {
        always_awake(n, horizon)
    } else if cfg.protocol.goldfish_family() && cfg.attack != AttackKind::ByzFuzz {
        gf_conditioned_schedule(cfg, &honest, horizon, rng)
    } else {
        let mut s = random_sleepy(n, horizon, cfg.awake_pct, rng);
        ensure_min_awake(&mut s, &honest, 1, rng);
        if cfg.protocol == Protocol::Ds {
            // Every honest validator leads one instance per period and must
            // be awake to open it.
            let period = 2 * cfg.n as u64 * cfg.delta;
            for (r, row) in s.iter_mut().enumerate() {
                if r as u64 % period == 0 {
                    for &h in &honest {
                        row[h] = true;
                    }
                }
            }
        }
        s
    };
    let clients = if cfg.models.client_sleepiness == ClientSleepiness::AlwaysOn
        || cfg.attack.scripted()
    {
        always_awake(cfg.clients as usize, horizon)
    } else {
        random_sleepy(cfg.clients as usize, horizon, cfg.awake_pct, rng)
    };
    (validators, clients)
}

fn build_strategy(cfg: &ScenarioConfig) -> Box<dyn Strategy> {
    match cfg.attack {
        AttackKind::None => Box::new(NullStrategy),
        AttackKind::ByzFuzz => Box::new(ByzFuzz::default()),
        AttackKind::DelayFuzz => Box::new(DelayFuzz::default()),
        AttackKind::SplitBrain => Box::new(SplitBrain::new(cfg.engine_quorum())),
        AttackKind::FourWorlds => Box::new(FourWorlds),
        AttackKind::EquivocateLeader => Box::new(EquivocateLeader::new()),
        AttackKind::GhostCert => Box::new(GhostCert::new(
            Transaction::new(555_000),
            0,
            cfg.inject.start + 1,
            cfg.qthresh as usize,
        )),
        AttackKind::SleepyDa => Box::new(SleepyDa::new(cfg.delta)),
    }
}

pub fn build_world(cfg: &ScenarioConfig) -> Result<World, ConfigError> {
    cfg.validate()?;
    let horizon = cfg.resolved_horizon();
    let corrupt: BTreeSet<u16> = spread_corrupt_set(cfg.n, cfg.f);
    let quorum = cfg.engine_quorum();
    let engine_params =
        EngineParams { n: cfg.n, quorum, delta: cfg.delta, gossip_txs: true };
    let ds_params = DsParams { n: cfg.n, delta: cfg.delta };
    let gf_params = cfg.gf_params();
    let communicating =
        cfg.models.client_interactivity == ClientInteractivity::Communicating;

    let validators: Vec<ValidatorRole> = (0..cfg.n)
        .map(|v| match cfg.protocol {
            Protocol::Int | Protocol::Frz | Protocol::LiveStar => {
                ValidatorRole::Engine(ValidatorState::new(v, engine_params))
            }
            Protocol::LiveQ => {
                ValidatorRole::Signer(SignerValidator::new(ValidatorState::new(v, engine_params)))
            }
            Protocol::Ds => ValidatorRole::Ds(DsValidator::new(v, ds_params)),
            Protocol::Gf => ValidatorRole::Gf(GfValidator::new(v, gf_params)),
            Protocol::LivePhi => {
                ValidatorRole::Phi(PhiValidator::new(GfValidator::new(v, gf_params)))
            }
        })
        .collect();
    let clients: Vec<(u32, ClientRole)> = (0..cfg.clients)
        .map(|c| {
            let role = match cfg.protocol {
                Protocol::Int => ClientRole::Engine(EngineClient::new(quorum)),
                Protocol::Frz => ClientRole::Freeze(FreezeClient::new(cfg.delta, quorum)),
                Protocol::LiveQ => ClientRole::QuorumQueue(QuorumQueueClient::new(
                    quorum,
                    cfg.qthresh,
                    cfg.u_int(),
                )),
                Protocol::LiveStar => ClientRole::GossipQueue(GossipQueueClient::new(
                    quorum,
                    cfg.delta,
                    cfg.u_int(),
                )),
                Protocol::Ds => ClientRole::Ds(DsClient::new(ds_params, communicating)),
                Protocol::Gf => ClientRole::Gf(GfClient::new(gf_params)),
                Protocol::LivePhi => ClientRole::Phi(HeartbeatQueueClient::new(
                    GfClient::new(gf_params),
                    cfg.phi,
                    cfg.u_int(),
                )),
            };
            (c, role)
        })
        .collect();

    let mut sched_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f0e_1d1c_2b2a);
    let (validator_sched, client_sched) = build_schedules(cfg, horizon, &mut sched_rng);
    let world_cfg = WorldConfig {
        n: cfg.n,
        f: cfg.f,
        delta: cfg.delta,
        horizon,
        seed: cfg.seed,
        corrupt: corrupt.clone(),
        models: cfg.models,
        protocol_label: cfg.protocol.label().to_string(),
        declared_latency: cfg.declared_latency(),
        quorum,
    };
    Ok(World {
        cfg: world_cfg,
        validators,
        clients,
        validator_sched,
        client_sched,
        injections: build_injections(cfg),
        registry: SigRegistry::new(cfg.n, corrupt, cfg.seed),
        strategy: build_strategy(cfg),
    })
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub trace: Trace,
    pub ledger: CommitLedger,
    pub verdict: Verdict,
    pub phi_division_undefined: u64,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, HarnessError> {
    let world = build_world(cfg)?;
    let report = run(world)?;
    let verdict = check(&report.trace, cfg.declared_latency());
    Ok(ScenarioRun {
        trace: report.trace,
        ledger: report.commit_ledger,
        verdict,
        phi_division_undefined: report.phi_division_undefined,
    })
}

/// Runs one closure per seed. With the `parallel` feature the seeds fan out
/// across a rayon pool; results keep seed order either way. Every run is
/// self-contained (own world, own RNG stream), so the outputs are identical
/// across both execution modes.
#[cfg(feature = "parallel")]
pub fn map_runs<T, F>(seeds: &[u64], job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| job(s)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_runs<T, F>(seeds: &[u64], job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    seeds.iter().map(|&s| job(s)).collect()
}

/// Sequential twin of [`map_runs`], available regardless of features; the
/// benchmark suite compares the two.
pub fn map_runs_sequential<T, F>(seeds: &[u64], job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    seeds.iter().map(|&s| job(s)).collect()
}

pub const CSV_HEADER: &str = "protocol,f_or_beta,client_model,seeds,safe_count,live_count";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellReport {
    pub protocol: String,
    pub f_or_beta: String,
    pub client_model: String,
    pub seeds: u64,
    pub safe_count: u64,
    pub live_count: u64,
}

impl CellReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.protocol, self.f_or_beta, self.client_model, self.seeds, self.safe_count,
            self.live_count
        )
    }
}

pub fn to_csv(rows: &[CellReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CellReport>, ConfigError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != CSV_HEADER {
                return Err(ConfigError::Parse { line: 1, reason: "bad csv header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(ConfigError::Parse { line: i + 1, reason: "expected 6 columns".into() });
        }
        let num = |s: &str| -> Result<u64, ConfigError> {
            s.parse().map_err(|_| ConfigError::Parse {
                line: i + 1,
                reason: format!("bad number `{s}`"),
            })
        };
        rows.push(CellReport {
            protocol: parts[0].to_string(),
            f_or_beta: parts[1].to_string(),
            client_model: parts[2].to_string(),
            seeds: num(parts[3])?,
            safe_count: num(parts[4])?,
            live_count: num(parts[5])?,
        });
    }
    Ok(rows)
}

fn f_or_beta_label(cfg: &ScenarioConfig) -> String {
    if cfg.protocol.goldfish_family() {
        format!("{:.3}", cfg.f as f64 / cfg.n as f64)
    } else {
        cfg.f.to_string()
    }
}

/// Runs `seeds` independent instances of one scenario cell and tallies the
/// safe and live verdicts. Runs that fail outright (config or model guard)
/// count as neither.
pub fn run_cell(base: &ScenarioConfig, seeds: &[u64]) -> CellReport {
    let outcomes = map_runs(seeds, |s| {
        let mut cfg = base.clone();
        cfg.seed = s;
        run_scenario(&cfg)
            .map(|r| (r.verdict.safety.is_safe(), r.verdict.liveness.is_live()))
            .unwrap_or((false, false))
    });
    CellReport {
        protocol: base.protocol.label().to_string(),
        f_or_beta: f_or_beta_label(base),
        client_model: base.models.label(),
        seeds: seeds.len() as u64,
        safe_count: outcomes.iter().filter(|(s, _)| *s).count() as u64,
        live_count: outcomes.iter().filter(|(_, l)| *l).count() as u64,
    }
}

pub fn sweep(base: &ScenarioConfig, fs: &[u16], seeds: &[u64]) -> Vec<CellReport> {
    fs.iter()
        .map(|&f| {
            let mut cfg = base.clone();
            cfg.f = f;
            run_cell(&cfg, seeds)
        })
        .collect()
}

/// Sweep forced through the sequential runner, for comparing against the
/// parallel path.
pub fn sweep_sequential(base: &ScenarioConfig, fs: &[u16], seeds: &[u64]) -> Vec<CellReport> {
    fs.iter()
        .map(|&f| {
            let mut cfg = base.clone();
            cfg.f = f;
            let outcomes = map_runs_sequential(seeds, |s| {
                let mut c = cfg.clone();
                c.seed = s;
                run_scenario(&c)
                    .map(|r| (r.verdict.safety.is_safe(), r.verdict.liveness.is_live()))
                    .unwrap_or((false, false))
            });
            CellReport {
                protocol: cfg.protocol.label().to_string(),
                f_or_beta: f_or_beta_label(&cfg),
                client_model: cfg.models.label(),
                seeds: seeds.len() as u64,
                safe_count: outcomes.iter().filter(|(s, _)| *s).count() as u64,
                live_count: outcomes.iter().filter(|(_, l)| *l).count() as u64,
            }
        })
        .collect()
}

#[derive(Debug)]
pub struct HierarchyReport {
    pub lines: Vec<String>,
    pub ok: bool,
}

/// Model-hierarchy cross-checks.
///
/// 1. A silent client is a degenerate communicating client: the quorum-queue
///    protocol run under both interactivity labels must give byte-identical
///    event and log streams.
/// 2. The always-on validator model is the sleepy model restricted to the
///    full-awake schedule: the broadcast protocol must give the same verdict
///    under both labels on that schedule.
pub fn hierarchy_check(seed: u64) -> HierarchyReport {
    let mut lines = Vec::new();
    let mut ok = true;

    let mut liveq = ScenarioConfig::for_protocol(Protocol::LiveQ);
    liveq.f = 1;
    liveq.seed = seed;
    let mut liveq_comm = liveq.clone();
    liveq_comm.models.client_interactivity = ClientInteractivity::Communicating;
    match (run_scenario(&liveq), run_scenario(&liveq_comm)) {
        (Ok(a), Ok(b)) => {
            let (ha, hb) = (a.trace.body_hash(), b.trace.body_hash());
            let pass = ha == hb;
            ok &= pass;
            lines.push(format!(
                "liveq silent->communicating body hash: {:016x} vs {:016x} [{}]",
                ha,
                hb,
                if pass { "ok" } else { "MISMATCH" }
            ));
        }
        _ => {
            ok = false;
            lines.push("liveq hierarchy run failed".to_string());
        }
    }

    let mut ds = ScenarioConfig::for_protocol(Protocol::Ds);
    ds.f = 1;
    ds.seed = seed;
    let mut ds_sleepy = ds.clone();
    ds_sleepy.models.validators = ValidatorModel::Sleepy;
    ds_sleepy.awake_pct = 100;
    match (run_scenario(&ds), run_scenario(&ds_sleepy)) {
        (Ok(a), Ok(b)) => {
            let pass = (a.verdict.safety.is_safe(), a.verdict.liveness.is_live())
                == (b.verdict.safety.is_safe(), b.verdict.liveness.is_live());
            ok &= pass;
            lines.push(format!(
                "ds alwayson vs sleepy(full awake) verdicts: {} vs {} [{}]",
                a.verdict,
                b.verdict,
                if pass { "ok" } else { "MISMATCH" }
            ));
        }
        _ => {
            ok = false;
            lines.push("ds hierarchy run failed".to_string());
        }
    }

    HierarchyReport { lines, ok }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_applies_defaults_then_overrides() {
        let cfg = ScenarioConfig::parse(
            "# engine scenario\nprotocol = int\nn = 5\nf = 1\nquorum = 3\nseed = 11\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 5);
        assert_eq!(cfg.engine_quorum(), 3);
        assert_eq!(cfg.delta, 2);
        assert_eq!(cfg.u_int(), 16);
    }

    #[test]
    fn parse_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            ScenarioConfig::parse("protocol = int\nbogus = 1\n"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("protocol = int\nn = many\n"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("n = 4\n"),
            Err(ConfigError::Invalid { field: "protocol", .. })
        ));
    }

    #[test]
    fn matrix_rejects_incoherent_combinations() {
        let mut frz = ScenarioConfig::for_protocol(Protocol::Frz);
        frz.models.client_interactivity = ClientInteractivity::Silent;
        assert!(frz.validate().is_err());

        let mut da = ScenarioConfig::for_protocol(Protocol::Gf);
        da.attack = AttackKind::SleepyDa;
        da.models.validators = ValidatorModel::AlwaysOn;
        assert!(da.validate().is_err());

        let mut ghost = ScenarioConfig::for_protocol(Protocol::Int);
        ghost.attack = AttackKind::GhostCert;
        assert!(ghost.validate().is_err());
    }

    #[test]
    fn auto_quorum_tracks_n() {
        let mut cfg = ScenarioConfig::for_protocol(Protocol::Int);
        assert_eq!(cfg.engine_quorum(), 4);
        cfg.n = 5;
        assert_eq!(cfg.engine_quorum(), 3);
        cfg.quorum = 5;
        assert_eq!(cfg.engine_quorum(), 5);
    }

    #[test]
    fn faultless_engine_scenario_is_safe_and_live() {
        let cfg = ScenarioConfig::for_protocol(Protocol::Int);
        let run = run_scenario(&cfg).unwrap();
        assert!(run.verdict.safety.is_safe(), "{}", run.verdict);
        assert!(run.verdict.liveness.is_live(), "{}", run.verdict);
        assert!(!run.ledger.is_empty());
    }

    #[test]
    fn four_worlds_splits_the_gossip_queue_but_not_the_freeze() {
        let mut star = ScenarioConfig::for_protocol(Protocol::LiveStar);
        star.f = 3;
        star.attack = AttackKind::FourWorlds;
        star.inject.to = InjectTarget::Pair;
        let run = run_scenario(&star).unwrap();
        assert!(!run.verdict.safety.is_safe(), "expected split, got {}", run.verdict);

        let mut frz = ScenarioConfig::for_protocol(Protocol::Frz);
        frz.f = 3;
        frz.attack = AttackKind::FourWorlds;
        frz.inject.to = InjectTarget::Pair;
        let run = run_scenario(&frz).unwrap();
        assert!(run.verdict.safety.is_safe(), "{}", run.verdict);
    }

    #[test]
    fn ghost_cert_breaks_quorum_queue_at_threshold_corruptions() {
        let mut cfg = ScenarioConfig::for_protocol(Protocol::LiveQ);
        cfg.n = 5;
        cfg.quorum = 3;
        cfg.f = 2;
        cfg.attack = AttackKind::GhostCert;
        let run = run_scenario(&cfg).unwrap();
        assert!(!run.verdict.safety.is_safe(), "expected ghost split, got {}", run.verdict);
    }

    #[test]
    fn split_brain_forges_certificates_past_the_quorum_only() {
        let mut int = ScenarioConfig::for_protocol(Protocol::Int);
        int.f = 4;
        int.attack = AttackKind::SplitBrain;
        int.clients = 4;
        let run = run_scenario(&int).unwrap();
        assert!(!run.verdict.safety.is_safe(), "expected split, got {}", run.verdict);

        let mut frz = ScenarioConfig::for_protocol(Protocol::Frz);
        frz.f = 4;
        frz.attack = AttackKind::SplitBrain;
        frz.clients = 4;
        let run = run_scenario(&frz).unwrap();
        assert!(run.verdict.safety.is_safe(), "{}", run.verdict);

        let mut below = ScenarioConfig::for_protocol(Protocol::Int);
        below.f = 3;
        below.attack = AttackKind::SplitBrain;
        below.clients = 4;
        let run = run_scenario(&below).unwrap();
        assert!(run.verdict.safety.is_safe(), "{}", run.verdict);
    }

    #[test]
    fn csv_round_trips() {
        let rows = vec![
            CellReport {
                protocol: "int".into(),
                f_or_beta: "2".into(),
                client_model: "alwayson-alwayson-silent".into(),
                seeds: 50,
                safe_count: 50,
                live_count: 50,
            },
            CellReport {
                protocol: "gf".into(),
                f_or_beta: "0.250".into(),
                client_model: "sleepy-alwayson-silent".into(),
                seeds: 50,
                safe_count: 50,
                live_count: 49,
            },
        ];
        let text = to_csv(&rows);
        assert_eq!(parse_csv(&text).unwrap(), rows);
        assert!(parse_csv("nonsense\n").is_err());
    }

    #[test]
    fn hierarchy_checks_pass() {
        let report = hierarchy_check(5);
        assert!(report.ok, "{:?}", report.lines);
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree() {
        let cfg = ScenarioConfig::for_protocol(Protocol::Int);
        let fs = [0u16, 2];
        let seeds = [1u64, 2, 3];
        assert_eq!(sweep(&cfg, &fs, &seeds), sweep_sequential(&cfg, &fs, &seeds));
    }
}
