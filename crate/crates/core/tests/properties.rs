//! Randomized invariants: log algebra, the safety checkers, certificate
//! wire handling, the network fabric, gadget clients, and whole-scenario
//! structural audits. These complement the curated landscape tests by
//! exploring the input space instead of pinning named cells.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resilience_core::crypto::SigRegistry;
use resilience_core::engine::{
    commit_digest, consume, consume_cert, txs_to_log, Certificate, ConsumeError,
};
use resilience_core::gadgets::{txsig_digest, FreezeClient, QuorumQueueClient};
use resilience_core::harness::{run_scenario, AttackKind, Protocol, ScenarioConfig};
use resilience_core::messages::{Payload, Received};
use resilience_core::net::Network;
use resilience_core::trace::Trace;
use resilience_core::types::{
    ClientInteractivity, ClientSleepiness, Log, ModelSelector, PartyId, Transaction, TxId,
    ValidatorId, ValidatorModel,
};
use resilience_core::verdict::{check, check_safety, check_safety_exhaustive};

fn to_log(ids: &[u64]) -> Log {
    Log::from_entries(ids.iter().map(|&x| TxId(x)).collect())
}

mod log_algebra {
    use super::*;

    proptest! {
        #[test]
        fn consistency_is_reflexive_and_symmetric(
            a in prop::collection::vec(0u64..8, 0..6),
            b in prop::collection::vec(0u64..8, 0..6),
        ) {
            let (la, lb) = (to_log(&a), to_log(&b));
            prop_assert!(la.is_consistent_with(&la));
            prop_assert_eq!(la.is_consistent_with(&lb), lb.is_consistent_with(&la));
        }

        #[test]
        fn prefixes_are_consistent_and_appends_extend(
            a in prop::collection::vec(0u64..8, 0..6),
            cut in any::<prop::sample::Index>(),
            extra in 0u64..16,
        ) {
            let la = to_log(&a);
            let k = cut.index(la.len() + 1);
            let prefix = Log::from_entries(la.entries()[..k].to_vec());
            prop_assert!(prefix.is_prefix_of(&la));
            prop_assert!(prefix.is_consistent_with(&la));

            let mut ext = la.clone();
            ext.append(TxId(extra));
            prop_assert!(la.is_prefix_of(&ext));
            if la.contains(TxId(extra)) {
                prop_assert_eq!(ext.len(), la.len());
            } else {
                prop_assert_eq!(ext.len(), la.len() + 1);
            }
        }

        #[test]
        fn divergent_extensions_of_a_common_prefix_conflict(
            base in prop::collection::vec(0u64..8, 0..5),
            x in 10u64..20,
            y in 20u64..30,
        ) {
            let mut a = to_log(&base);
            let mut b = a.clone();
            a.append(TxId(x));
            b.append(TxId(y));
            prop_assert!(!a.is_consistent_with(&b));
        }
    }
}

mod safety_checker {
    use super::*;

    /// Random three-client traces: mostly prefixes of one shuffled universe,
    /// with occasional prefixes of a conflicting shuffle mixed in.
    fn synthetic_trace(rng: &mut ChaCha8Rng) -> Trace {
        let horizon = 3u64;
        let clients = 3usize;
        let mut universe: Vec<TxId> = (1..=6).map(TxId).collect();
        universe.shuffle(rng);
        let client_logs: Vec<Vec<Log>> = (0..clients)
            .map(|_| {
                (0..=horizon)
                    .map(|_| {
                        let len = rng.gen_range(0..=universe.len());
                        if rng.gen_bool(0.9) {
                            Log::from_entries(universe[..len].to_vec())
                        } else {
                            let mut other = universe.clone();
                            other.shuffle(rng);
                            Log::from_entries(other[..len].to_vec())
                        }
                    })
                    .collect()
            })
            .collect();
        let rounds = horizon as usize + 1;
        Trace {
            n: 3,
            f: 0,
            delta: 1,
            horizon,
            seed: 0,
            models: ModelSelector {
                validators: ValidatorModel::AlwaysOn,
                client_sleepiness: ClientSleepiness::AlwaysOn,
                client_interactivity: ClientInteractivity::Silent,
            },
            corrupt: BTreeSet::new(),
            clients: (0..clients as u32).collect(),
            protocol_label: "synthetic".to_string(),
            declared_latency: 4,
            events: Vec::new(),
            validator_awake: vec![vec![true; 3]; rounds],
            client_awake: vec![vec![true; clients]; rounds],
            client_logs,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]
        #[test]
        fn sorted_checker_matches_exhaustive_and_evidence_reverifies(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = synthetic_trace(&mut rng);
            let fast = check_safety(&trace);
            let slow = check_safety_exhaustive(&trace);
            prop_assert_eq!(fast.is_safe(), slow.is_safe());

            let verdict = check(&trace, 4);
            let audit = verdict.reverify(&trace, 4);
            prop_assert!(audit.is_ok(), "embedded evidence failed reverify: {:?}", audit);
        }
    }
}

mod certificate_wire {
    use super::*;

    #[test]
    fn genesis_certificate_always_consumes_to_the_empty_log() {
        let registry = SigRegistry::new(4, BTreeSet::new(), 1);
        for quorum in 0..6 {
            assert_eq!(
                consume_cert(&Certificate::genesis(), quorum, &registry),
                Ok(Log::genesis())
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn decode_is_total_and_canonical(bytes in prop::collection::vec(any::<u8>(), 0..160)) {
            let registry = SigRegistry::new(4, BTreeSet::new(), 1);
            let _ = consume(&bytes, 3, &registry);
            if let Some(cert) = Certificate::decode(&bytes) {
                prop_assert_eq!(cert.encode(), bytes);
            }
        }

        #[test]
        fn valid_certificates_round_trip_and_verify(
            epoch in 1u64..40,
            ids in prop::collection::btree_set(1u64..200, 0..6),
            signers in prop::collection::btree_set(0u16..5, 1..6),
            quorum in 1u16..=5,
        ) {
            let mut registry = SigRegistry::new(5, BTreeSet::new(), 9);
            let txs: Vec<Transaction> = ids.iter().map(|&id| Transaction::new(id)).collect();
            let digest = commit_digest(epoch, &txs);
            let sigs = signers.iter().map(|&v| registry.sign(v, digest)).collect();
            let cert = Certificate { epoch, txs: txs.clone(), sigs };

            prop_assert_eq!(Certificate::decode(&cert.encode()), Some(cert.clone()));

            let res = consume_cert(&cert, quorum, &registry);
            if signers.len() >= quorum as usize {
                prop_assert_eq!(res, Ok(txs_to_log(&txs)));

                let mut forged = cert.clone();
                forged.sigs[0].tag ^= 1;
                prop_assert_eq!(
                    consume_cert(&forged, quorum, &registry),
                    Err(ConsumeError::BadSignature)
                );

                let mut doubled = cert.clone();
                doubled.sigs.push(doubled.sigs[0]);
                prop_assert_eq!(
                    consume_cert(&doubled, quorum, &registry),
                    Err(ConsumeError::DuplicateSigner)
                );
            } else {
                prop_assert_eq!(res, Err(ConsumeError::TooFewSigners));
            }
        }
    }
}

mod network_fabric {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn deliveries_are_opaque_until_due_and_stamped_at_the_read(
            sent in 0u64..12,
            delta in 1u64..5,
            wake_gap in 0u64..5,
        ) {
            let mut net = Network::new();
            let from = PartyId::Validator(0);
            let to = PartyId::Client(1);
            let fanout = [from, to, PartyId::Validator(1)];
            let ids = net.send_honest(from, &fanout, Payload::TxGossip(Transaction::new(7)), sent, delta);
            prop_assert_eq!(ids.len(), 2, "self-addressed envelope must be dropped");
            prop_assert_eq!(net.pending_for(to), 1);

            for r in 0..sent + delta {
                prop_assert!(net.deliver_due(r).is_empty(), "early delivery at round {}", r);
            }
            let due = net.deliver_due(sent + delta);
            prop_assert_eq!(due.len(), 2);
            prop_assert!(due.iter().all(|e| e.sent_at == sent && e.deliver_at == sent + delta));
            prop_assert_eq!(net.pending_for(to), 1, "inbox still holds the unread message");

            let wake = sent + delta + wake_gap;
            let got = net.read_inbox(to, wake);
            prop_assert_eq!(got.len(), 1);
            prop_assert_eq!(got[0].receipt, wake);
            prop_assert_eq!(got[0].from, from);
            prop_assert_eq!(net.pending_for(to), 0);
            prop_assert!(net.read_inbox(to, wake + 1).is_empty());
        }

        #[test]
        fn retiming_is_confined_to_the_synchrony_window(
            sent in 0u64..12,
            delta in 1u64..5,
            target in 0u64..20,
        ) {
            let mut net = Network::new();
            let ids = net.send_honest(
                PartyId::Validator(0),
                &[PartyId::Validator(1)],
                Payload::TxGossip(Transaction::new(1)),
                sent,
                delta,
            );
            let idx = ids[0];
            let legal = target >= sent + 1 && target <= sent + delta;
            prop_assert_eq!(net.amend(idx, target, delta).is_ok(), legal);
            let expect = if legal { target } else { sent + delta };
            prop_assert_eq!(net.envelope(idx).deliver_at, expect);
        }

        #[test]
        fn adversarial_sends_are_policed_for_claim_and_timing(
            now in 0u64..12,
            offset in 0u64..6,
            v in 0u16..4,
        ) {
            let corrupt: BTreeSet<ValidatorId> = [0u16, 1].into_iter().collect();
            let mut net = Network::new();
            let to = PartyId::Client(0);
            let payload = Payload::TxGossip(Transaction::new(2));

            let res = net.send_adversarial(PartyId::Validator(v), to, payload.clone(), now, now + offset, &corrupt);
            let admissible = corrupt.contains(&v) && offset >= 1;
            prop_assert_eq!(res.is_ok(), admissible);

            let spoofed = net.send_adversarial(PartyId::Client(9), to, payload, now, now + 1, &corrupt);
            prop_assert!(spoofed.is_ok(), "client labels are never authenticated");
        }
    }
}

mod quorum_queue {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn log_grows_monotonically_and_needs_q_distinct_signers(
            feeds in prop::collection::vec((0u64..10, 1u64..6, 0u16..4, any::<bool>()), 0..40),
        ) {
            let mut registry = SigRegistry::new(4, BTreeSet::new(), 3);
            let (quorum, q, u_int) = (3u16, 2u16, 4u64);
            let mut client = QuorumQueueClient::new(quorum, q, u_int);
            let horizon = 10 + u_int + 1;

            let mut good_signers: BTreeMap<u64, BTreeSet<ValidatorId>> = BTreeMap::new();
            let mut prev = Log::genesis();
            for round in 0..=horizon {
                let mut inbox = Vec::new();
                for &(at, id, signer, good) in feeds.iter().filter(|f| f.0 == round) {
                    let _ = at;
                    let tx = Transaction::new(id);
                    let message = if good { txsig_digest(&tx) } else { txsig_digest(&tx) ^ 5 };
                    let sig = registry.sign(signer, message);
                    if good {
                        good_signers.entry(id).or_default().insert(signer);
                    }
                    inbox.push(Received {
                        from: PartyId::Validator(signer),
                        receipt: round,
                        payload: Payload::TxSigned { tx, sig },
                    });
                }
                client.step(round, &inbox, &registry);
                let now = client.log_at(round);
                prop_assert!(prev.is_prefix_of(&now), "log shrank at round {}", round);
                prev = now;
            }

            let fin = client.log_at(horizon);
            for id in 1u64..6 {
                let supported = good_signers.get(&id).map_or(0, BTreeSet::len) >= q as usize;
                prop_assert_eq!(
                    fin.contains(TxId(id)),
                    supported,
                    "tx {} support {:?}",
                    id,
                    good_signers.get(&id)
                );
            }
        }
    }
}

mod freeze_client {
    use super::*;

    fn branch(offset: u64, len: usize) -> Vec<Transaction> {
        (1..=len as u64).map(|i| Transaction::new(offset + i)).collect()
    }

    fn signed_cert(registry: &mut SigRegistry, epoch: u64, txs: Vec<Transaction>) -> Certificate {
        let digest = commit_digest(epoch, &txs);
        let sigs = (0u16..3).map(|v| registry.sign(v, digest)).collect();
        Certificate { epoch, txs, sigs }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_is_monotone_and_always_a_consumed_log(
            certs in prop::collection::vec((1u64..5, any::<bool>(), 0usize..=4, 0u64..8), 1..10),
        ) {
            let mut registry = SigRegistry::new(4, BTreeSet::new(), 11);
            let mut client = FreezeClient::new(2, 3);
            let mut prev = Log::genesis();
            for round in 0..=12u64 {
                let mut inbox = Vec::new();
                for &(epoch, alt, len, at) in certs.iter().filter(|c| c.3 == round) {
                    let _ = at;
                    let txs = if alt { branch(100, len) } else { branch(0, len) };
                    let cert = signed_cert(&mut registry, epoch, txs);
                    inbox.push(Received {
                        from: PartyId::Validator(0),
                        receipt: round,
                        payload: Payload::Certificate(cert),
                    });
                }
                let _ = client.step(round, &[], &inbox, &registry);
                let now = client.log();
                prop_assert!(prev.is_prefix_of(&now), "output shrank at round {}", round);
                prop_assert!(
                    now.is_empty() || client.consumed().iter().any(|m| m == &now),
                    "output is not a certified log"
                );
                prev = now;
            }
        }

        #[test]
        fn final_output_ignores_certificate_arrival_order(
            seed in any::<u64>(),
            lens in prop::collection::vec(1usize..=4, 2..6),
        ) {
            let mut registry = SigRegistry::new(4, BTreeSet::new(), 11);
            let certs: Vec<Certificate> = lens
                .iter()
                .enumerate()
                .map(|(i, &len)| {
                    let txs = if i % 2 == 0 { branch(0, len) } else { branch(100, len) };
                    signed_cert(&mut registry, i as u64 + 1, txs)
                })
                .collect();

            let run = |order: &[Certificate]| {
                let mut client = FreezeClient::new(2, 3);
                let inbox: Vec<Received> = order
                    .iter()
                    .map(|cert| Received {
                        from: PartyId::Validator(0),
                        receipt: 0,
                        payload: Payload::Certificate(cert.clone()),
                    })
                    .collect();
                let _ = client.step(0, &[], &inbox, &registry);
                for round in 1..=4u64 {
                    let _ = client.step(round, &[], &[], &registry);
                }
                client.log()
            };

            let baseline = run(&certs);
            let mut shuffled = certs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(run(&shuffled), baseline);
        }
    }
}

mod scenarios {
    use super::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn random_runs_are_deterministic_and_pass_structural_audits(
            pick in 0usize..3,
            f in 0u16..3,
            seed in 0u64..1_000_000,
            attack in 0usize..3,
        ) {
            let mut cfg = ScenarioConfig::for_protocol([Protocol::Int, Protocol::LiveQ, Protocol::Ds][pick]);
            cfg.f = f;
            cfg.seed = seed;
            cfg.attack = [AttackKind::None, AttackKind::ByzFuzz, AttackKind::DelayFuzz][attack];

            let first = run_scenario(&cfg);
            prop_assert!(first.is_ok(), "scenario error: {:?}", first.err());
            let first = first.unwrap();
            let second = run_scenario(&cfg).unwrap();
            prop_assert_eq!(first.trace.hash(), second.trace.hash());
            prop_assert_eq!(first.verdict.to_string(), second.verdict.to_string());

            prop_assert!(first.trace.audit_delta_bound().is_ok());
            if cfg.models.client_interactivity == ClientInteractivity::Silent {
                prop_assert!(first.trace.audit_silent_clients().is_ok());
            }
            let reverified = first.verdict.reverify(&first.trace, cfg.declared_latency());
            prop_assert!(reverified.is_ok(), "verdict evidence failed reverify: {:?}", reverified);

            let round_trip = Trace::import(&first.trace.export());
            prop_assert!(round_trip.is_ok(), "trace round-trip: {:?}", round_trip.err());
            prop_assert_eq!(round_trip.unwrap().hash(), first.trace.hash());
        }
    }
}
