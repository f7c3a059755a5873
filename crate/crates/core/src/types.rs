//! Core vocabulary shared by every protocol: rounds, transactions, logs,
//! party identities and the client/validator model axes.
//!
//! A log is an ordered transaction sequence; two logs are *consistent* when
//! one is a prefix of the other. All safety checking in this crate reduces to
//! that relation.

use std::collections::BTreeSet;
use std::fmt;

/// Discrete round counter of the synchronous execution.
pub type Round = u64;

/// Opaque transaction identifier. Ids are unique per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.0)
    }
}

/// A transaction: an id plus an opaque payload. The payload never influences
/// protocol logic; it only feeds digests.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    pub id: TxId,
    pub payload: Vec<u8>,
}

impl Transaction {
    pub fn new(id: u64) -> Self {
        Transaction { id: TxId(id), payload: Vec::new() }
    }
}

/// Validator index, dense in `[0, n)`.
pub type ValidatorId = u16;

/// Client label. Labels need not be dense or known in advance; adversaries
/// may claim arbitrary labels on spoofed messages.
pub type ClientId = u32;

/// Identity of a message sender or recipient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    Validator(ValidatorId),
    Client(ClientId),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Validator(v) => write!(f, "v{v}"),
            PartyId::Client(c) => write!(f, "c{c}"),
        }
    }
}

/// An ordered, duplicate-free transaction log. Genesis is the empty log.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Log {
    entries: Vec<TxId>,
}

impl Log {
    pub fn genesis() -> Self {
        Log::default()
    }

    pub fn from_entries(entries: Vec<TxId>) -> Self {
        let mut log = Log::genesis();
        for tx in entries {
            log.append(tx);
        }
        log
    }

    pub fn entries(&self) -> &[TxId] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, tx: TxId) -> bool {
        self.entries.contains(&tx)
    }

    /// Appends a transaction, dropping it if already present (first
    /// occurrence wins).
    pub fn append(&mut self, tx: TxId) {
        if !self.contains(tx) {
            self.entries.push(tx);
        }
    }

    pub fn extend_from(&mut self, txs: &[TxId]) {
        for &tx in txs {
            self.append(tx);
        }
    }

    /// True when `self` is a prefix of `other`. Reflexive.
    pub fn is_prefix_of(&self, other: &Log) -> bool {
        self.entries.len() <= other.entries.len()
            && self.entries == other.entries[..self.entries.len()]
    }

    /// Consistency: either log is a prefix of the other.
    pub fn is_consistent_with(&self, other: &Log) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }
}

impl fmt::Display for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, tx) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{tx}")?;
        }
        write!(f, "]")
    }
}

/// Whether validators may be put to sleep by the scenario scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValidatorModel {
    AlwaysOn,
    Sleepy,
}

/// Whether clients may be put to sleep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClientSleepiness {
    AlwaysOn,
    Sleepy,
}

/// Whether clients are allowed to send messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClientInteractivity {
    Silent,
    Communicating,
}

/// The model coordinates of a scenario: one validator axis and two client
/// axes. Strengthening means always-on over sleepy and communicating over
/// silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSelector {
    pub validators: ValidatorModel,
    pub client_sleepiness: ClientSleepiness,
    pub client_interactivity: ClientInteractivity,
}

impl ModelSelector {
    pub fn new(
        validators: ValidatorModel,
        client_sleepiness: ClientSleepiness,
        client_interactivity: ClientInteractivity,
    ) -> Self {
        ModelSelector { validators, client_sleepiness, client_interactivity }
    }

    /// True when `self` is at least as strong as `weaker` on every axis.
    pub fn strengthens(&self, weaker: &ModelSelector) -> bool {
        let v = self.validators == ValidatorModel::AlwaysOn
            || weaker.validators == ValidatorModel::Sleepy;
        let s = self.client_sleepiness == ClientSleepiness::AlwaysOn
            || weaker.client_sleepiness == ClientSleepiness::Sleepy;
        let i = self.client_interactivity == ClientInteractivity::Communicating
            || weaker.client_interactivity == ClientInteractivity::Silent;
        v && s && i
    }

    pub fn label(&self) -> String {
        let v = match self.validators {
            ValidatorModel::AlwaysOn => "alwayson",
            ValidatorModel::Sleepy => "sleepy",
        };
        let s = match self.client_sleepiness {
            ClientSleepiness::AlwaysOn => "alwayson",
            ClientSleepiness::Sleepy => "sleepy",
        };
        let i = match self.client_interactivity {
            ClientInteractivity::Silent => "silent",
            ClientInteractivity::Communicating => "communicating",
        };
        format!("{v}-validators/{s}-{i}-clients")
    }
}

/// A claimed (liveness, safety) resilience pair, expressed as fault counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResiliencePair {
    pub live_faults: u16,
    pub safe_faults: u16,
}

/// Returns the default corrupt validator set for `f` faults out of `n`:
/// indices spread evenly over the round-robin leader order so that no two
/// corrupted validators lead consecutive epochs until f exceeds n/2.
pub fn spread_corrupt_set(n: u16, f: u16) -> BTreeSet<ValidatorId> {
    let mut set = BTreeSet::new();
    if f == 0 {
        return set;
    }
    for i in 0..f {
        set.insert(((i as u32 * n as u32) / f as u32) as ValidatorId);
    }
    debug_assert_eq!(set.len(), f as usize);
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(ids: &[u64]) -> Log {
        Log::from_entries(ids.iter().map(|&i| TxId(i)).collect())
    }

    #[test]
    fn prefix_on_examples() {
        assert!(log(&[1, 2]).is_prefix_of(&log(&[1, 2, 3])));
        assert!(!log(&[1, 3]).is_prefix_of(&log(&[1, 2, 3])));
        assert!(log(&[]).is_prefix_of(&log(&[])));
        assert!(log(&[]).is_prefix_of(&log(&[9])));
        assert!(log(&[1, 2]).is_prefix_of(&log(&[1, 2])));
    }

    #[test]
    fn consistency_is_symmetric() {
        let a = log(&[1, 2]);
        let b = log(&[1, 2, 3]);
        let c = log(&[1, 3]);
        assert!(a.is_consistent_with(&b));
        assert!(b.is_consistent_with(&a));
        assert!(!a.is_consistent_with(&c) || !c.is_consistent_with(&a));
        assert!(!b.is_consistent_with(&c));
    }

    #[test]
    fn append_drops_duplicates_keeping_first() {
        let mut l = log(&[1, 2]);
        l.append(TxId(1));
        l.append(TxId(3));
        assert_eq!(l, log(&[1, 2, 3]));
    }

    #[test]
    fn genesis_is_prefix_of_everything() {
        assert!(Log::genesis().is_prefix_of(&log(&[5, 6])));
        assert!(Log::genesis().is_consistent_with(&Log::genesis()));
    }

    #[test]
    fn spread_corrupt_sets_are_distinct_and_sized() {
        for n in 1..=8u16 {
            for f in 0..=n {
                let s = spread_corrupt_set(n, f);
                assert_eq!(s.len(), f as usize);
                assert!(s.iter().all(|&v| v < n));
            }
        }
        // n=6, f=2 spreads to non-adjacent leader slots.
        let s = spread_corrupt_set(6, 2);
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn model_strengthening_is_reflexive_and_ordered() {
        let weak = ModelSelector::new(
            ValidatorModel::Sleepy,
            ClientSleepiness::Sleepy,
            ClientInteractivity::Silent,
        );
        let strong = ModelSelector::new(
            ValidatorModel::AlwaysOn,
            ClientSleepiness::AlwaysOn,
            ClientInteractivity::Communicating,
        );
        assert!(weak.strengthens(&weak));
        assert!(strong.strengthens(&weak));
        assert!(!weak.strengthens(&strong));
    }
}
