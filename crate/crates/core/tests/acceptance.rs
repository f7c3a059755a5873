//! Acceptance suite: the resilience landscape criteria, one test per
//! criterion. Each test prints a single `criterion NN ... PASS` line on
//! success; failures panic with the first offending cell and seed.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resilience_core::harness::{
    hierarchy_check, map_runs, run_scenario, AttackKind, InjectTarget, Protocol, ScenarioConfig,
    ScenarioRun,
};
use resilience_core::sim::audit_certifiable;
use resilience_core::trace::Trace;
use resilience_core::types::{
    ClientInteractivity, ClientSleepiness, Log, ModelSelector, TxId, ValidatorModel,
};
use resilience_core::verdict::{check_safety, check_safety_exhaustive, SafetyVerdict};

fn seeds(count: u64) -> Vec<u64> {
    (1..=count).collect()
}

/// Runs one scenario per seed (parallel) and applies a per-run check;
/// panics with the first failure.
fn for_each_seed<F>(label: &str, cfg: &ScenarioConfig, seeds: &[u64], check: F)
where
    F: Fn(u64, &ScenarioRun) -> Result<(), String> + Sync,
{
    let failures: Vec<String> = map_runs(seeds, |s| {
        let mut c = cfg.clone();
        c.seed = s;
        match run_scenario(&c) {
            Ok(run) => check(s, &run).err(),
            Err(e) => Some(format!("seed {s}: scenario error: {e}")),
        }
    })
    .into_iter()
    .flatten()
    .collect();
    assert!(
        failures.is_empty(),
        "{label}: {} of {} seeds failed; first: {}",
        failures.len(),
        seeds.len(),
        failures[0]
    );
}

fn one(label: &str, cfg: &ScenarioConfig) -> ScenarioRun {
    run_scenario(cfg).unwrap_or_else(|e| panic!("{label}: scenario error: {e}"))
}

fn require_safe(label: &str, s: u64, run: &ScenarioRun) -> Result<(), String> {
    if run.verdict.safety.is_safe() {
        Ok(())
    } else {
        Err(format!("{label} seed {s}: {}", run.verdict))
    }
}

fn require_live(label: &str, s: u64, run: &ScenarioRun) -> Result<(), String> {
    if run.verdict.liveness.is_live() {
        Ok(())
    } else {
        Err(format!("{label} seed {s}: {}", run.verdict))
    }
}

#[test]
fn criterion_01_freeze_client_holds_safety_for_every_f() {
    let started = Instant::now();
    for f in 0..=6u16 {
        let mut fuzz = ScenarioConfig::for_protocol(Protocol::Frz);
        fuzz.f = f;
        fuzz.attack = AttackKind::ByzFuzz;
        for_each_seed("frz fuzz", &fuzz, &seeds(50), |s, run| {
            require_safe(&format!("frz f={f}"), s, run)?;
            if f <= 2 {
                require_live(&format!("frz f={f}"), s, run)?;
            }
            Ok(())
        });

        let mut sb = fuzz.clone();
        sb.attack = AttackKind::SplitBrain;
        sb.clients = 4;
        let run = one("frz split_brain", &sb);
        assert!(run.verdict.safety.is_safe(), "frz split_brain f={f}: {}", run.verdict);

        let mut fw = fuzz.clone();
        fw.attack = AttackKind::FourWorlds;
        fw.inject.to = InjectTarget::Pair;
        let run = one("frz four_worlds", &fw);
        assert!(run.verdict.safety.is_safe(), "frz four_worlds f={f}: {}", run.verdict);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 01 took {elapsed:?}, budget is 60s");
    println!("criterion 01 (freeze client safety across all f, live to f=2): PASS ({elapsed:?})");
}

#[test]
fn criterion_02_gossip_queue_stays_live_at_full_corruption() {
    for f in 0..=6u16 {
        let mut fuzz = ScenarioConfig::for_protocol(Protocol::LiveStar);
        fuzz.f = f;
        fuzz.attack = AttackKind::ByzFuzz;
        if f == 6 {
            // No honest validators left: feed the environment through the
            // communicating clients instead.
            fuzz.inject.to = InjectTarget::Clients;
        }
        for_each_seed("livestar fuzz", &fuzz, &seeds(50), |s, run| {
            require_live(&format!("livestar f={f}"), s, run)?;
            if f <= 2 {
                require_safe(&format!("livestar f={f}"), s, run)?;
            }
            Ok(())
        });
    }

    let mut fw = ScenarioConfig::for_protocol(Protocol::LiveStar);
    fw.f = 3;
    fw.attack = AttackKind::FourWorlds;
    fw.inject.to = InjectTarget::Pair;
    let run = one("livestar four_worlds", &fw);
    assert!(
        matches!(run.verdict.safety, SafetyVerdict::Violation(_)),
        "livestar four_worlds f=3 expected a safety split, got {}",
        run.verdict
    );
    println!("criterion 02 (gossip queue live at every f, four-worlds split pinned): PASS");
}

#[test]
fn criterion_03_quorum_queue_keeps_silent_clients_live() {
    let mut base = ScenarioConfig::for_protocol(Protocol::LiveQ);
    base.n = 5;
    base.quorum = 3;
    base.qthresh = 2;
    for f in 0..=3u16 {
        let mut fuzz = base.clone();
        fuzz.f = f;
        fuzz.attack = AttackKind::ByzFuzz;
        for_each_seed("liveq fuzz", &fuzz, &seeds(50), |s, run| {
            require_live(&format!("liveq f={f}"), s, run)?;
            if f <= 1 {
                require_safe(&format!("liveq f={f}"), s, run)?;
            }
            run.trace
                .audit_silent_clients()
                .map_err(|e| format!("liveq f={f} seed {s}: silent audit: {e}"))?;
            Ok(())
        });
    }

    let mut ghost = base.clone();
    ghost.f = 2;
    ghost.attack = AttackKind::GhostCert;
    let run = one("liveq ghost_cert", &ghost);
    assert!(
        matches!(run.verdict.safety, SafetyVerdict::Violation(_)),
        "liveq ghost_cert f=2 expected a queue split, got {}",
        run.verdict
    );
    run.trace.audit_silent_clients().expect("ghost_cert trace silent audit");
    println!("criterion 03 (quorum queue live to f=3 silent, ghost-cert split pinned): PASS");
}

#[test]
fn criterion_04_sequenced_broadcast_has_full_resilience() {
    let base = ScenarioConfig::for_protocol(Protocol::Ds);
    assert_eq!(base.declared_latency(), 32);
    for f in 0..=3u16 {
        let mut fuzz = base.clone();
        fuzz.f = f;
        fuzz.attack = AttackKind::ByzFuzz;
        for_each_seed("ds fuzz", &fuzz, &seeds(50), |s, run| {
            require_safe(&format!("ds f={f}"), s, run)?;
            require_live(&format!("ds f={f}"), s, run)
        });

        let mut sb = base.clone();
        sb.f = f;
        sb.attack = AttackKind::SplitBrain;
        let run = one("ds split_brain", &sb);
        assert!(run.verdict.safety.is_safe(), "ds split_brain f={f}: {}", run.verdict);
        assert!(run.verdict.liveness.is_live(), "ds split_brain f={f}: {}", run.verdict);
    }

    // Verdicts must not depend on the validator sleep schedule: the same
    // seeds under 50 random sleepy schedules (one honest validator awake
    // each round, honest leaders awake when their instances open) give the
    // same answers as the always-on model.
    for_each_seed(
        "ds sleepy",
        &{
            let mut c = base.clone();
            c.f = 3;
            c
        },
        &seeds(50),
        |s, on| {
            let mut sleepy = base.clone();
            sleepy.f = 3;
            sleepy.seed = s;
            sleepy.models.validators = ValidatorModel::Sleepy;
            let sl = run_scenario(&sleepy).map_err(|e| format!("sleepy seed {s}: {e}"))?;
            let flags = |r: &ScenarioRun| {
                (r.verdict.safety.is_safe(), r.verdict.liveness.is_live())
            };
            if flags(on) != flags(&sl) {
                return Err(format!(
                    "seed {s}: verdict drifted across validator models: {} vs {}",
                    on.verdict, sl.verdict
                ));
            }
            if !sl.verdict.safety.is_safe() || !sl.verdict.liveness.is_live() {
                return Err(format!("seed {s}: sleepy run not clean: {}", sl.verdict));
            }
            Ok(())
        },
    );
    println!("criterion 04 (sequenced broadcast safe+live to f=n-1, sleep-schedule invariant): PASS");
}

#[test]
fn criterion_05_engine_commit_guard_and_forging_audit() {
    let base = ScenarioConfig::for_protocol(Protocol::Int);
    let quorum = base.engine_quorum();
    assert_eq!(quorum, 4);

    for f in 0..=2u16 {
        let mut fuzz = base.clone();
        fuzz.f = f;
        fuzz.attack = AttackKind::ByzFuzz;
        for_each_seed("int fuzz", &fuzz, &seeds(50), |s, run| {
            require_safe(&format!("int f={f}"), s, run)?;
            require_live(&format!("int f={f}"), s, run)?;
            if let Some((forged, client, round, log)) =
                audit_certifiable(&run.trace, &run.ledger, quorum)
            {
                return Err(format!(
                    "int f={f} seed {s}: assemblable certificate {:?} conflicts with client \
                     {client} round {round} log {:?}",
                    forged.entries(),
                    log.entries()
                ));
            }
            Ok(())
        });
    }

    for f in 1..=3u16 {
        let mut sb = base.clone();
        sb.f = f;
        sb.attack = AttackKind::SplitBrain;
        sb.clients = 4;
        let run = one("int split_brain", &sb);
        assert!(run.verdict.safety.is_safe(), "int split_brain f={f}: {}", run.verdict);
        assert!(
            audit_certifiable(&run.trace, &run.ledger, quorum).is_none(),
            "int split_brain f={f}: forging audit tripped"
        );
    }
    let mut sb = base.clone();
    sb.f = 4;
    sb.attack = AttackKind::SplitBrain;
    sb.clients = 4;
    let run = one("int split_brain at quorum", &sb);
    assert!(
        matches!(run.verdict.safety, SafetyVerdict::Violation(_)),
        "int split_brain f=4 expected forged-certificate split, got {}",
        run.verdict
    );

    for f in 1..=2u16 {
        let mut eq = base.clone();
        eq.f = f;
        eq.attack = AttackKind::EquivocateLeader;
        let run = one("int equivocate_leader", &eq);
        assert!(run.verdict.safety.is_safe(), "equivocate f={f}: {}", run.verdict);
        assert!(run.verdict.liveness.is_live(), "equivocate f={f}: {}", run.verdict);
        assert!(
            !run.ledger.is_empty() && run.ledger.keys().all(|(epoch, _)| *epoch >= 1),
            "equivocate f={f}: expected the first epoch suppressed and later epochs committing; \
             ledger epochs {:?}",
            run.ledger.keys().map(|(e, _)| *e).collect::<Vec<_>>()
        );
    }
    println!("criterion 05 (engine commit guard, forging audit clean below quorum): PASS");
}

#[test]
fn criterion_06_chain_threshold_landscape() {
    let mut base = ScenarioConfig::for_protocol(Protocol::Gf);
    base.horizon = 360; // 60 slots at delta=2
    assert_eq!(base.declared_latency(), 36);

    for f in [0u16, 2] {
        let mut live = base.clone();
        live.f = f;
        live.attack = AttackKind::DelayFuzz;
        for_each_seed("gf delayfuzz", &live, &seeds(50), |s, run| {
            require_safe(&format!("gf f={f}"), s, run)?;
            require_live(&format!("gf f={f}"), s, run)
        });
    }

    // At beta = f / min-awake = 4/8 exactly: every validator awake, half of
    // them corrupted and fully adversarial. Confirmation may stall (not
    // asserted) but must never split or roll back.
    let mut half = base.clone();
    half.f = 4;
    half.attack = AttackKind::ByzFuzz;
    half.awake_pct = 100;
    for_each_seed("gf byzfuzz half", &half, &seeds(50), |s, run| {
        if run.trace.beta() != 0.5 {
            return Err(format!("seed {s}: measured beta {} != 0.5", run.trace.beta()));
        }
        require_safe("gf beta=0.5", s, run)
    });

    let mut da = ScenarioConfig::for_protocol(Protocol::Gf);
    da.f = 4;
    da.attack = AttackKind::SleepyDa;
    let run = one("gf sleepy_da", &da);
    assert!(run.verdict.safety.is_safe(), "gf sleepy_da: {}", run.verdict);
    assert!(
        !run.verdict.liveness.is_live(),
        "gf sleepy_da expected a confirmation stall, got {}",
        run.verdict
    );
    println!("criterion 06 (threshold chain: live to beta=1/4, safe at beta=1/2, stall pinned): PASS");
}

#[test]
fn criterion_07_phi_queue_over_chain() {
    let base = ScenarioConfig::for_protocol(Protocol::LivePhi);
    assert_eq!(base.u_int(), 24);
    assert_eq!(base.declared_latency(), 30);

    for f in [0u16, 3] {
        let mut live = base.clone();
        live.f = f;
        live.attack = AttackKind::DelayFuzz;
        for_each_seed("livephi delayfuzz", &live, &seeds(50), |s, run| {
            require_safe(&format!("livephi f={f}"), s, run)?;
            require_live(&format!("livephi f={f}"), s, run)?;
            if run.phi_division_undefined != 0 {
                return Err(format!(
                    "livephi f={f} seed {s}: {} undefined support ratios",
                    run.phi_division_undefined
                ));
            }
            Ok(())
        });
    }

    let mut half = base.clone();
    half.f = 4;
    half.attack = AttackKind::DelayFuzz;
    for_each_seed("livephi half", &half, &seeds(50), |s, run| {
        require_safe("livephi beta=0.5", s, run)?;
        if run.phi_division_undefined != 0 {
            return Err(format!("livephi beta=0.5 seed {s}: undefined support ratio"));
        }
        Ok(())
    });
    println!("criterion 07 (phi-weighted queue live to beta=3/8, safe to beta=1/2): PASS");
}

#[test]
fn criterion_08_runs_are_bitwise_deterministic() {
    let mut configs: Vec<ScenarioConfig> = Vec::new();
    let mut push = |p: Protocol, f: u16, attack: AttackKind, tweak: fn(&mut ScenarioConfig)| {
        let mut c = ScenarioConfig::for_protocol(p);
        c.f = f;
        c.attack = attack;
        tweak(&mut c);
        configs.push(c);
    };
    push(Protocol::Int, 0, AttackKind::None, |_| {});
    push(Protocol::Int, 2, AttackKind::ByzFuzz, |_| {});
    push(Protocol::Frz, 3, AttackKind::ByzFuzz, |_| {});
    push(Protocol::Frz, 4, AttackKind::SplitBrain, |c| c.clients = 4);
    push(Protocol::LiveQ, 2, AttackKind::GhostCert, |c| {
        c.n = 5;
        c.quorum = 3;
    });
    push(Protocol::LiveStar, 6, AttackKind::ByzFuzz, |c| {
        c.inject.to = InjectTarget::Clients;
    });
    push(Protocol::Ds, 3, AttackKind::ByzFuzz, |_| {});
    push(Protocol::Gf, 2, AttackKind::DelayFuzz, |c| c.horizon = 120);
    push(Protocol::Gf, 4, AttackKind::SleepyDa, |_| {});
    push(Protocol::LivePhi, 3, AttackKind::DelayFuzz, |_| {});
    assert_eq!(configs.len(), 10);

    for (i, cfg) in configs.iter().enumerate() {
        let a = one("determinism", cfg);
        let b = one("determinism", cfg);
        assert_eq!(
            a.trace.hash(),
            b.trace.hash(),
            "config {i} ({}, f={}, {}): trace hash drifted between runs",
            cfg.protocol.label(),
            cfg.f,
            cfg.attack.label()
        );
        assert_eq!(a.verdict.to_string(), b.verdict.to_string(), "config {i}: verdict drifted");
    }
    println!("criterion 08 (10 configs, repeated runs hash identically): PASS");
}

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

#[test]
fn criterion_09_sorted_checker_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let (mut safe_count, mut violation_count) = (0u32, 0u32);
    for case in 0..200 {
        let trace = synthetic_trace(&mut rng);
        let fast = check_safety(&trace);
        let slow = check_safety_exhaustive(&trace);
        assert_eq!(
            fast.is_safe(),
            slow.is_safe(),
            "case {case}: sorted checker says {fast:?}, brute force says {slow:?}"
        );
        if fast.is_safe() {
            safe_count += 1;
        } else {
            violation_count += 1;
        }
    }
    assert!(safe_count > 0 && violation_count > 0, "generator never exercised both outcomes");
    println!(
        "criterion 09 (sorted vs brute-force safety checker, 200 traces, {safe_count} safe / \
         {violation_count} split): PASS"
    );
}

#[test]
fn criterion_10_client_and_validator_model_hierarchy() {
    let report = hierarchy_check(11);
    for line in &report.lines {
        println!("  {line}");
    }
    assert!(report.ok, "hierarchy check failed: {:?}", report.lines);
    println!("criterion 10 (silent->communicating and sleepy->always-on hierarchy): PASS");
}
