//! Deterministic round-based simulator and protocol library for exploring
//! how consensus safety and liveness degrade across client and validator
//! participation models under a synchronous network with a rushing,
//! adaptive adversary.
//!
//! The crate is organized in layers:
//!
//! - [`types`], [`crypto`], [`messages`]: transactions, logs, idealized
//!   signatures, a seeded random oracle, and the wire payload enum;
//! - [`net`]: the synchronous network with adversarial retiming and
//!   sleep-opaque inboxes;
//! - [`engine`], [`dolev_strong`], [`goldfish`]: the three validator
//!   protocols (a quorum lockstep engine, sequenced broadcast instances,
//!   and a vote-based longest-chain protocol);
//! - [`gadgets`]: client-side constructions layered on those protocols
//!   (certificate freezing, signature-quorum queues, gossip queues,
//!   heartbeat-weighted queues);
//! - [`sim`]: the world container and the round pipeline;
//! - [`adversary`]: fuzzing and scripted attack strategies;
//! - [`verdict`], [`trace`]: recorded histories and the safety/liveness
//!   judgments over them;
//! - [`harness`]: scenario configs, sweeps, and CSV reporting for the CLI.

pub mod adversary;
pub mod crypto;
pub mod dolev_strong;
pub mod engine;
pub mod gadgets;
pub mod goldfish;
pub mod harness;
pub mod messages;
pub mod net;
pub mod sim;
pub mod trace;
pub mod types;
pub mod verdict;

pub use trace::{Event, Origin, Trace};
pub use types::{ClientId, Log, PartyId, Round, Transaction, TxId, ValidatorId};
pub use verdict::{check_liveness, check_safety, Verdict};
