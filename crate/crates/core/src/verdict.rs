//! Safety and liveness checking over recorded traces.
//!
//! Safety: every pair of honest client logs, across all rounds, must be
//! consistent (one a prefix of the other). The fast checker exploits that a
//! set of logs is pairwise consistent iff it forms a chain under the prefix
//! order, so it sorts the distinct logs by length and compares neighbours;
//! [`check_safety_exhaustive`] is the quadratic reference oracle.
//!
//! Liveness with parameter `u`: a transaction received by an awake honest
//! validator (or by an awake honest client when clients are communicating)
//! before round `r - u` must appear in the round-`r` log of every honest
//! client that stayed awake throughout `[r - u, r]`.

use std::collections::BTreeMap;
use std::fmt;

use crate::trace::{Event, Trace};
use crate::types::{ClientId, ClientInteractivity, Log, PartyId, Round, TxId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyEvidence {
    pub a: (ClientId, Round, Log),
    pub b: (ClientId, Round, Log),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SafetyVerdict {
    Safe,
    Violation(SafetyEvidence),
}

impl SafetyVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, SafetyVerdict::Safe)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessEvidence {
    pub tx: TxId,
    pub receipt: Round,
    pub client: ClientId,
    pub round: Round,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LivenessVerdict {
    Live,
    Violation(LivenessEvidence),
}

impl LivenessVerdict {
    pub fn is_live(&self) -> bool {
        matches!(self, LivenessVerdict::Live)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub safety: SafetyVerdict,
    pub liveness: LivenessVerdict,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "safety={} liveness={}",
            if self.safety.is_safe() { "SAFE" } else { "VIOLATION" },
            if self.liveness.is_live() { "LIVE" } else { "VIOLATION" },
        )?;
        if let SafetyVerdict::Violation(ev) = &self.safety {
            write!(
                f,
                " evidence=safety(c{}@{}={};c{}@{}={})",
                ev.a.0, ev.a.1, ev.a.2, ev.b.0, ev.b.1, ev.b.2
            )?;
        }
        if let LivenessVerdict::Violation(ev) = &self.liveness {
            write!(
                f,
                " evidence=liveness({} receipt={} starving=c{}@{})",
                ev.tx, ev.receipt, ev.client, ev.round
            )?;
        }
        Ok(())
    }
}

impl Verdict {
    /// Re-checks the evidence embedded in this verdict against the trace.
    pub fn reverify(&self, trace: &Trace, u: Round) -> Result<(), String> {
        if let SafetyVerdict::Violation(ev) = &self.safety {
            for (c, r, log) in [&ev.a, &ev.b] {
                let idx = trace
                    .client_index(*c)
                    .ok_or_else(|| format!("unknown client c{c}"))?;
                if trace.client_log(idx, *r) != log {
                    return Err(format!("evidence log mismatch for c{c}@{r}"));
                }
            }
            if ev.a.2.is_consistent_with(&ev.b.2) {
                return Err("safety evidence logs are consistent".into());
            }
        }
        if let LivenessVerdict::Violation(ev) = &self.liveness {
            let receipt = receipt_rounds(trace)
                .get(&ev.tx)
                .copied()
                .ok_or_else(|| format!("{} was never received", ev.tx))?;
            if receipt > ev.receipt {
                return Err(format!("{} receipt {} later than claimed", ev.tx, receipt));
            }
            if ev.receipt + u >= ev.round {
                return Err("violation round is inside the latency window".into());
            }
            let idx = trace
                .client_index(ev.client)
                .ok_or_else(|| format!("unknown client c{}", ev.client))?;
            let lo = ev.round - u;
            for r in lo..=ev.round {
                if !trace.client_awake[r as usize][idx] {
                    return Err(format!("c{} was asleep at {r}", ev.client));
                }
            }
            if trace.client_log(idx, ev.round).contains(ev.tx) {
                return Err(format!("{} is present in the flagged log", ev.tx));
            }
        }
        Ok(())
    }
}

/// Fast safety check: chain-sorts the distinct logs and compares neighbours.
pub fn check_safety(trace: &Trace) -> SafetyVerdict {
    let mut reps: BTreeMap<Vec<TxId>, (ClientId, Round)> = BTreeMap::new();
    for (idx, &client) in trace.clients.iter().enumerate() {
        for round in 0..=trace.horizon {
            let log = trace.client_log(idx, round);
            reps.entry(log.entries().to_vec()).or_insert((client, round));
        }
    }
    let mut logs: Vec<(Vec<TxId>, (ClientId, Round))> = reps.into_iter().collect();
    logs.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    for pair in logs.windows(2) {
        let (shorter, a_rep) = &pair[0];
        let (longer, b_rep) = &pair[1];
        if shorter[..] != longer[..shorter.len()] {
            return SafetyVerdict::Violation(SafetyEvidence {
                a: (a_rep.0, a_rep.1, Log::from_entries(shorter.clone())),
                b: (b_rep.0, b_rep.1, Log::from_entries(longer.clone())),
            });
        }
    }
    SafetyVerdict::Safe
}

/// Reference oracle: enumerates every pair of (client, round) logs.
pub fn check_safety_exhaustive(trace: &Trace) -> SafetyVerdict {
    let coords: Vec<(usize, ClientId, Round)> = trace
        .clients
        .iter()
        .enumerate()
        .flat_map(|(idx, &c)| (0..=trace.horizon).map(move |r| (idx, c, r)))
        .collect();
    for (i, &(ia, ca, ra)) in coords.iter().enumerate() {
        for &(ib, cb, rb) in &coords[i + 1..] {
            let la = trace.client_log(ia, ra);
            let lb = trace.client_log(ib, rb);
            if !la.is_consistent_with(lb) {
                return SafetyVerdict::Violation(SafetyEvidence {
                    a: (ca, ra, la.clone()),
                    b: (cb, rb, lb.clone()),
                });
            }
        }
    }
    SafetyVerdict::Safe
}

/// Earliest round each transaction was received by a qualifying honest party:
/// an awake honest validator, or an awake honest client when the scenario's
/// clients are communicating.
pub fn receipt_rounds(trace: &Trace) -> BTreeMap<TxId, Round> {
    let mut receipts = BTreeMap::new();
    for ev in &trace.events {
        let Event::Input { round, tx, to } = ev else { continue };
        let qualifies = match to {
            PartyId::Validator(v) => {
                trace.is_honest_validator(*v)
                    && trace.validator_awake[*round as usize][*v as usize]
            }
            PartyId::Client(c) => {
                trace.models.client_interactivity == ClientInteractivity::Communicating
                    && trace
                        .client_index(*c)
                        .is_some_and(|i| trace.client_awake[*round as usize][i])
            }
        };
        if qualifies {
            receipts.entry(*tx).or_insert(*round);
        }
    }
    receipts
}

/// Liveness check with latency parameter `u`.
pub fn check_liveness(trace: &Trace, u: Round) -> LivenessVerdict {
    let receipts = receipt_rounds(trace);
    let rounds = trace.horizon as usize + 1;
    // awake_run[idx][r] = number of consecutive awake rounds for client idx
    // ending at (and including) round r.
    let mut awake_run = vec![vec![0u64; rounds]; trace.clients.len()];
    for (idx, runs) in awake_run.iter_mut().enumerate() {
        for r in 0..rounds {
            if trace.client_awake[r][idx] {
                runs[r] = if r == 0 { 1 } else { runs[r - 1] + 1 };
            }
        }
    }
    for round in 0..=trace.horizon {
        let Some(lo) = round.checked_sub(u) else { continue };
        for (&tx, &receipt) in &receipts {
            if receipt >= lo {
                continue;
            }
            for (idx, &client) in trace.clients.iter().enumerate() {
                if awake_run[idx][round as usize] < u + 1 {
                    continue;
                }
                if !trace.client_log(idx, round).contains(tx) {
                    return LivenessVerdict::Violation(LivenessEvidence {
                        tx,
                        receipt,
                        client,
                        round,
                    });
                }
            }
        }
    }
    LivenessVerdict::Live
}

pub fn check(trace: &Trace, u: Round) -> Verdict {
    Verdict { safety: check_safety(trace), liveness: check_liveness(trace, u) }
}
