//! Execution traces: the full record of one simulated run.
//!
//! A trace carries the scenario echo (sizes, models, corrupt set), every
//! network-visible event, per-round awake sets and per-round client output
//! logs. Traces export to structured text (one `round|kind|from|to|payload`
//! line per event, interleaved with per-round client log lines), reimport
//! from that text, and hash deterministically. Identical configurations and
//! seeds must produce byte-identical exports.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::crypto::{digest_bytes, Digester};
use crate::types::{
    ClientId, ClientInteractivity, Log, ModelSelector, PartyId, Round, TxId, ValidatorId,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Who actually emitted a message (as opposed to the claimed sender).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Honest,
    Adversary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Input { round: Round, tx: TxId, to: PartyId },
    Send { round: Round, origin: Origin, claim: PartyId, digest: u64 },
    Deliver { round: Round, origin: Origin, claim: PartyId, to: PartyId, sent_at: Round, digest: u64 },
    Wake { round: Round, party: PartyId },
    Sleep { round: Round, party: PartyId },
}

impl Event {
    pub fn round(&self) -> Round {
        match *self {
            Event::Input { round, .. }
            | Event::Send { round, .. }
            | Event::Deliver { round, .. }
            | Event::Wake { round, .. }
            | Event::Sleep { round, .. } => round,
        }
    }
}

fn party_str(p: PartyId) -> String {
    p.to_string()
}

fn parse_party(s: &str) -> Option<PartyId> {
    let (kind, rest) = s.split_at(1);
    match kind {
        "v" => rest.parse().ok().map(PartyId::Validator),
        "c" => rest.parse().ok().map(PartyId::Client),
        _ => None,
    }
}

/// Full record of one run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub n: u16,
    pub f: u16,
    pub delta: u64,
    pub horizon: Round,
    pub seed: u64,
    pub models: ModelSelector,
    pub corrupt: BTreeSet<ValidatorId>,
    pub clients: Vec<ClientId>,
    pub protocol_label: String,
    pub declared_latency: Round,
    pub events: Vec<Event>,
    /// `validator_awake[round][validator]`
    pub validator_awake: Vec<Vec<bool>>,
    /// `client_awake[round][client index]`
    pub client_awake: Vec<Vec<bool>>,
    /// `client_logs[client index][round]`: output log at the end of each round.
    pub client_logs: Vec<Vec<Log>>,
}

impl Trace {
    pub fn is_honest_validator(&self, v: ValidatorId) -> bool {
        v < self.n && !self.corrupt.contains(&v)
    }

    pub fn client_index(&self, c: ClientId) -> Option<usize> {
        self.clients.iter().position(|&x| x == c)
    }

    pub fn client_log(&self, client_idx: usize, round: Round) -> &Log {
        &self.client_logs[client_idx][round as usize]
    }

    /// Minimum over rounds of the awake validator set size (corrupted
    /// validators are always awake).
    pub fn min_awake_validators(&self) -> usize {
        self.validator_awake
            .iter()
            .map(|row| row.iter().filter(|&&a| a).count())
            .min()
            .unwrap_or(self.n as usize)
    }

    /// Sleepiness ratio beta = f / min_r |W_r|.
    pub fn beta(&self) -> f64 {
        let min = self.min_awake_validators();
        if min == 0 {
            return if self.f == 0 { 0.0 } else { f64::INFINITY };
        }
        self.f as f64 / min as f64
    }

    /// Checks the synchrony bound on honest-origin messages: every delivery
    /// must happen within `[sent_at + 1, sent_at + delta]`.
    pub fn audit_delta_bound(&self) -> Result<(), String> {
        for ev in &self.events {
            if let Event::Deliver { origin: Origin::Honest, round, sent_at, claim, to, .. } = ev {
                let gap = round.checked_sub(*sent_at);
                match gap {
                    Some(g) if g >= 1 && g <= self.delta => {}
                    _ => {
                        return Err(format!(
                            "delivery {claim}->{to} sent at {sent_at} delivered at {round} violates delta={}",
                            self.delta
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of messages actually originated by honest clients.
    pub fn honest_client_sends(&self) -> usize {
        self.events
            .iter()
            .filter(|ev| {
                matches!(
                    ev,
                    Event::Send { origin: Origin::Honest, claim: PartyId::Client(_), .. }
                )
            })
            .count()
    }

    /// Silent-model audit: silent honest clients must never send.
    pub fn audit_silent_clients(&self) -> Result<(), String> {
        if self.models.client_interactivity == ClientInteractivity::Silent {
            let sends = self.honest_client_sends();
            if sends > 0 {
                return Err(format!("{sends} honest client messages in a silent-client run"));
            }
        }
        Ok(())
    }

    pub fn export(&self) -> String {
        let mut out = String::new();
        let m = &self.models;
        let corrupt: Vec<String> = self.corrupt.iter().map(|v| v.to_string()).collect();
        let clients: Vec<String> = self.clients.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "#protocol={}", self.protocol_label);
        let _ = writeln!(
            out,
            "#n={} f={} delta={} horizon={} seed={} latency={}",
            self.n, self.f, self.delta, self.horizon, self.seed, self.declared_latency
        );
        let _ = writeln!(out, "#models={}", m.label());
        let _ = writeln!(out, "#corrupt={}", corrupt.join(","));
        let _ = writeln!(out, "#clients={}", clients.join(","));
        let mut ev_idx = 0usize;
        for round in 0..=self.horizon {
            while ev_idx < self.events.len() && self.events[ev_idx].round() == round {
                let line = match &self.events[ev_idx] {
                    Event::Input { round, tx, to } => {
                        format!("{round}|input|env|{}|{tx}", party_str(*to))
                    }
                    Event::Send { round, origin, claim, digest } => {
                        let from = match origin {
                            Origin::Honest => party_str(*claim),
                            Origin::Adversary => format!("adv({})", party_str(*claim)),
                        };
                        format!("{round}|send|{from}|*|{digest:016x}")
                    }
                    Event::Deliver { round, origin, claim, to, digest, .. } => {
                        let from = match origin {
                            Origin::Honest => party_str(*claim),
                            Origin::Adversary => format!("adv({})", party_str(*claim)),
                        };
                        format!("{round}|deliver|{from}|{}|{digest:016x}", party_str(*to))
                    }
                    Event::Wake { round, party } => {
                        format!("{round}|wake|{}|-|-", party_str(*party))
                    }
                    Event::Sleep { round, party } => {
                        format!("{round}|sleep|{}|-|-", party_str(*party))
                    }
                };
                out.push_str(&line);
                out.push('\n');
                ev_idx += 1;
            }
            for (idx, c) in self.clients.iter().enumerate() {
                let log = &self.client_logs[idx][round as usize];
                let txt: Vec<String> =
                    log.entries().iter().map(|t| t.0.to_string()).collect();
                let _ = writeln!(out, "{round}|log|c{c}|-|{}", txt.join(","));
            }
        }
        out
    }

    pub fn hash(&self) -> u64 {
        digest_bytes(self.export().as_bytes())
    }

    /// Hash over events and logs only (excludes the header echo), used when
    /// comparing runs across model coordinates.
    pub fn body_hash(&self) -> u64 {
        let text = self.export();
        let mut d = Digester::new();
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            d = d.bytes(line.as_bytes()).bytes(b"\n");
        }
        d.finish()
    }

    /// Rebuilds a checkable trace from exported text. Deliveries lose their
    /// original send rounds (the export keeps digests only), so the delta
    /// audit is not available on imported traces; safety and liveness
    /// checking are.
    pub fn import(text: &str) -> Result<Trace, TraceError> {
        use crate::types::{ClientSleepiness, ValidatorModel};
        let err = |line: usize, reason: &str| TraceError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut n = 0u16;
        let mut f = 0u16;
        let mut delta = 1u64;
        let mut horizon = 0u64;
        let mut seed = 0u64;
        let mut latency = 0u64;
        let mut models = ModelSelector::new(
            ValidatorModel::AlwaysOn,
            ClientSleepiness::AlwaysOn,
            ClientInteractivity::Silent,
        );
        let mut corrupt = BTreeSet::new();
        let mut clients: Vec<ClientId> = Vec::new();
        let mut protocol_label = String::new();
        let mut events: Vec<Event> = Vec::new();
        let mut logs_by_round: Vec<(Round, usize, Log)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            if raw.is_empty() {
                continue;
            }
            if let Some(hdr) = raw.strip_prefix('#') {
                for field in hdr.split_whitespace() {
                    let Some((k, v)) = field.split_once('=') else { continue };
                    match k {
                        "protocol" => protocol_label = v.to_string(),
                        "n" => n = v.parse().map_err(|_| err(lineno, "bad n"))?,
                        "f" => f = v.parse().map_err(|_| err(lineno, "bad f"))?,
                        "delta" => delta = v.parse().map_err(|_| err(lineno, "bad delta"))?,
                        "horizon" => horizon = v.parse().map_err(|_| err(lineno, "bad horizon"))?,
                        "seed" => seed = v.parse().map_err(|_| err(lineno, "bad seed"))?,
                        "latency" => latency = v.parse().map_err(|_| err(lineno, "bad latency"))?,
                        "models" => {
                            let parts: Vec<&str> = v.split('/').collect();
                            if parts.len() == 2 {
                                models.validators = if parts[0].starts_with("alwayson") {
                                    ValidatorModel::AlwaysOn
                                } else {
                                    ValidatorModel::Sleepy
                                };
                                models.client_sleepiness = if parts[1].starts_with("alwayson") {
                                    ClientSleepiness::AlwaysOn
                                } else {
                                    ClientSleepiness::Sleepy
                                };
                                models.client_interactivity = if parts[1].ends_with("communicating-clients") {
                                    ClientInteractivity::Communicating
                                } else {
                                    ClientInteractivity::Silent
                                };
                            }
                        }
                        "corrupt" => {
                            for v in v.split(',').filter(|s| !s.is_empty()) {
                                corrupt.insert(v.parse().map_err(|_| err(lineno, "bad corrupt"))?);
                            }
                        }
                        "clients" => {
                            for v in v.split(',').filter(|s| !s.is_empty()) {
                                clients.push(v.parse().map_err(|_| err(lineno, "bad clients"))?);
                            }
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = raw.split('|').collect();
            if fields.len() != 5 {
                return Err(err(lineno, "expected 5 pipe-separated fields"));
            }
            let round: Round = fields[0].parse().map_err(|_| err(lineno, "bad round"))?;
            match fields[1] {
                "input" => {
                    let to = parse_party(fields[3]).ok_or_else(|| err(lineno, "bad party"))?;
                    let tx = fields[4]
                        .strip_prefix("tx")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(lineno, "bad tx"))?;
                    events.push(Event::Input { round, tx: TxId(tx), to });
                }
                "send" | "deliver" => {
                    let (origin, claim_str) = match fields[2]
                        .strip_prefix("adv(")
                        .and_then(|s| s.strip_suffix(')'))
                    {
                        Some(inner) => (Origin::Adversary, inner),
                        None => (Origin::Honest, fields[2]),
                    };
                    let claim =
                        parse_party(claim_str).ok_or_else(|| err(lineno, "bad sender"))?;
                    let digest = u64::from_str_radix(fields[4], 16)
                        .map_err(|_| err(lineno, "bad digest"))?;
                    if fields[1] == "send" {
                        events.push(Event::Send { round, origin, claim, digest });
                    } else {
                        let to =
                            parse_party(fields[3]).ok_or_else(|| err(lineno, "bad recipient"))?;
                        events.push(Event::Deliver { round, origin, claim, to, sent_at: round, digest });
                    }
                }
                "wake" | "sleep" => {
                    let party =
                        parse_party(fields[2]).ok_or_else(|| err(lineno, "bad party"))?;
                    events.push(if fields[1] == "wake" {
                        Event::Wake { round, party }
                    } else {
                        Event::Sleep { round, party }
                    });
                }
                "log" => {
                    let PartyId::Client(c) =
                        parse_party(fields[2]).ok_or_else(|| err(lineno, "bad client"))?
                    else {
                        return Err(err(lineno, "log line must name a client"));
                    };
                    let idx = match clients.iter().position(|&x| x == c) {
                        Some(i) => i,
                        None => {
                            clients.push(c);
                            clients.len() - 1
                        }
                    };
                    let mut log = Log::genesis();
                    for part in fields[4].split(',').filter(|s| !s.is_empty()) {
                        log.append(TxId(part.parse().map_err(|_| err(lineno, "bad log entry"))?));
                    }
                    logs_by_round.push((round, idx, log));
                }
                other => return Err(err(lineno, &format!("unknown kind {other}"))),
            }
        }

        let rounds = horizon as usize + 1;
        let mut validator_awake = vec![vec![false; n as usize]; rounds];
        let mut client_awake = vec![vec![false; clients.len()]; rounds];
        // Replay wake/sleep transitions; a party's state persists until the
        // next transition.
        let mut v_state = vec![false; n as usize];
        let mut c_state = vec![false; clients.len()];
        let mut ev_iter = events.iter().peekable();
        for round in 0..rounds as u64 {
            while let Some(ev) = ev_iter.peek() {
                if ev.round() != round {
                    break;
                }
                match ev {
                    Event::Wake { party, .. } | Event::Sleep { party, .. } => {
                        let awake = matches!(ev, Event::Wake { .. });
                        match party {
                            PartyId::Validator(v) => v_state[*v as usize] = awake,
                            PartyId::Client(c) => {
                                if let Some(i) = clients.iter().position(|x| x == c) {
                                    c_state[i] = awake;
                                }
                            }
                        }
                    }
                    _ => {}
                }
                ev_iter.next();
            }
            validator_awake[round as usize] = v_state.clone();
            client_awake[round as usize] = c_state.clone();
        }

        let mut client_logs = vec![vec![Log::genesis(); rounds]; clients.len()];
        for (round, idx, log) in logs_by_round {
            if (round as usize) < rounds {
                client_logs[idx][round as usize] = log;
            }
        }
        // Fill any unrecorded rounds by carrying the previous log forward.
        for logs in client_logs.iter_mut() {
            for r in 1..rounds {
                if logs[r] == Log::genesis() && logs[r - 1] != Log::genesis() {
                    logs[r] = logs[r - 1].clone();
                }
            }
        }

        Ok(Trace {
            n,
            f,
            delta,
            horizon,
            seed,
            models,
            corrupt,
            clients,
            protocol_label,
            declared_latency: latency,
            events,
            validator_awake,
            client_awake,
            client_logs,
        })
    }
}
