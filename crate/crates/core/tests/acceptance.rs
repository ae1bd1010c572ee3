//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bsn_aka::metrics::{format_real, storage_account, CostModel, Role};
use bsn_aka::nodes::{lookup_sensor, sn_request, ProtocolError};
use bsn_aka::primitives::{NonceSource, OpMeter, Timestamp, DIGEST_BITS};
use bsn_aka::registry::{init_hub, Deployment, Provisioned, SensorCredentials};
use bsn_aka::simnet::{
    AbortReason, AdversaryAction, AdversaryScript, Route, SessionOutcome, Step, Transcript, World,
};
use bsn_aka::wire::{FrameKind, Hop, Message1};
use bsn_aka::FreshnessPolicy;

fn world(n: usize, m: usize, seed: u64) -> World {
    World::from_deployment(
        &Deployment::generate(n, m, seed),
        FreshnessPolicy::default(),
    )
    .unwrap()
}

fn first_request(t: &Transcript) -> Message1 {
    Message1::decode(&t.on_hop(Hop::SnToIn).next().unwrap().bytes).unwrap()
}

fn c1_key_agreement() -> Result<String, String> {
    let start = Instant::now();
    let mut sessions = 0u64;
    let mut failures = 0u64;
    for (n, count) in [(1usize, 334u64), (5, 333), (10, 333)] {
        // a fresh deployment every 10 sessions
        for chunk in 0..count.div_ceil(10) {
            let seed = (n as u64) << 32 | chunk;
            let mut w = world(n, 2, seed);
            for j in 0..10.min(count - chunk * 10) {
                let route = Route::new((chunk as usize + j as usize * 7) % n, j as usize % 2);
                let run = w
                    .run_honest(route, seed.wrapping_mul(31).wrapping_add(j))
                    .unwrap();
                sessions += 1;
                if !run.outcome.keys_agree() {
                    failures += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if sessions != 1000 || failures != 0 || elapsed >= Duration::from_secs(5) {
        return Err(format!(
            "{sessions} sessions, {failures} failures, {elapsed:?}"
        ));
    }
    Ok(format!("{sessions} sessions, 0 failures, {elapsed:.2?}"))
}

fn c2_hop_sizes() -> Result<String, String> {
    let expected = [384u64, 400, 368, 352];
    let mut w = world(3, 2, 2);
    let run = w.run_honest(Route::new(1, 1), 2).unwrap();
    let measured: Vec<u64> = run
        .transcript
        .records()
        .iter()
        .map(|r| r.bytes.len() as u64 * 8)
        .collect();
    let by_kind: Vec<u64> = FrameKind::ALL.iter().map(|k| k.bits() as u64).collect();
    if measured != expected || by_kind != expected || run.costs.bandwidth.0 != expected {
        return Err(format!("measured {measured:?}, kinds {by_kind:?}"));
    }
    Ok(format!("{measured:?}"))
}

fn c3_op_counts() -> Result<String, String> {
    let mut points = Vec::new();
    for n in [1usize, 2, 5, 10] {
        let mut w = world(n, 1, 30 + n as u64);
        let run = w.run_honest(Route::new(n - 1, 0), 3).unwrap();
        let sn = run.instrumentation.sensor;
        let hn = run.instrumentation.hub;
        if (sn.hashes, sn.xors, hn.hashes) != (2, 6, 2) {
            return Err(format!("n={n}: SN {sn:?}, HN {hn:?}"));
        }
        points.push((n as i64, hn.xors as i64));
    }
    let slope = (points[1].1 - points[0].1) / (points[1].0 - points[0].0);
    let intercept = points[0].1 - slope * points[0].0;
    if points.iter().any(|&(n, x)| x != slope * n + intercept) || (slope, intercept) != (2, 5) {
        return Err(format!("HN xors {points:?}"));
    }
    Ok(format!(
        "SN 2h/6x, HN 2h/{slope}n+{intercept}x at n=1,2,5,10"
    ))
}

fn c4_time_energy() -> Result<String, String> {
    let mut w = world(1, 1, 4);
    let run = w.run_honest(Route::default(), 4).unwrap();
    let sn = run.costs.role(Role::Sensor);
    let model = CostModel::default();
    let text = run.costs.to_text();
    let ok = sn.time_ms == 0.12
        && model.time_ms(2) == 0.12
        && (sn.energy_mj - 0.014256).abs() < 1e-12
        && (sn.energy_mj - 0.014).abs() <= 0.001
        && text.contains("timeMs = 0.12\nenergyMJ = 0.014256\n");
    if !ok {
        return Err(format!("timeMs {} energyMJ {}", sn.time_ms, sn.energy_mj));
    }
    Ok(format!(
        "timeMs {} energyMJ {}",
        format_real(sn.time_ms),
        format_real(sn.energy_mj)
    ))
}

fn c5_storage() -> Result<String, String> {
    for (n, m) in [(1usize, 1usize), (3, 1), (10, 2)] {
        let w = world(n, m, 5);
        let expected = 480 * n as u64 + 16 * m as u64 + 160;
        let measured = w.storage();
        let sensor_bits = w.sensor(0).unwrap().credentials().storage_bits();
        let formula = storage_account(n as u64, m as u64);
        if measured.hub != expected
            || formula.hub != expected
            || sensor_bits != 640
            || measured.sensor != 640
        {
            return Err(format!(
                "(n,m)=({n},{m}): hub {} vs {expected}, SN {sensor_bits}",
                measured.hub
            ));
        }
    }
    Ok("SN 640; HN 656, 1616, 4992".into())
}

fn c6_replay() -> Result<String, String> {
    let policy = FreshnessPolicy::default();
    let dt = policy.delta_t() as u64;
    let mut rejected = 0;
    for trial in 0..100u64 {
        let mut w = world(2, 1, 600 + trial);
        let mut last = None;
        for s in 0..3 + trial % 4 {
            last = Some(
                w.run_honest(Route::new((trial % 2) as usize, 0), trial * 10 + s)
                    .unwrap(),
            );
        }
        let transcript = last.unwrap().transcript;
        let t_n = first_request(&transcript).t_n.0 as u64;
        let offset = dt + trial % 4;
        let at = if trial % 2 == 0 {
            t_n + offset
        } else {
            t_n - offset
        };
        let run = w.replay_attack(&transcript, at).unwrap();
        match run.outcome {
            SessionOutcome::AbortedAt {
                step: Step::Step3,
                reason: AbortReason::Protocol(ProtocolError::StaleTimestamp { .. }),
            } => rejected += 1,
            other => return Err(format!("trial {trial}, at={at}, tN={t_n}: {other:?}")),
        }
        // one tick inside the window the same frame still authenticates
        let inside = w.replay_attack(&transcript, t_n + dt - 1).unwrap();
        if !matches!(inside.outcome, SessionOutcome::HubAccepted { .. }) {
            return Err(format!(
                "trial {trial}: in-window control {:?}",
                inside.outcome
            ));
        }
    }
    Ok(format!("{rejected}/100 StaleTimestamp"))
}

fn c7_tamper() -> Result<String, String> {
    let base = world(2, 1, 7);
    let mut failed = [0usize; 2];
    for (field, offset) in [(0usize, 160usize), (1, 0)] {
        for bit in 0..DIGEST_BITS {
            let mut w = base.clone();
            let script = AdversaryScript::honest().with(AdversaryAction::Tamper {
                hop: Hop::InToSn,
                occurrence: 0,
                bits: vec![offset + bit],
            });
            let run = w
                .run_session(Route::new(1, 0), &script, 70 + bit as u64)
                .unwrap();
            if run.outcome
                == (SessionOutcome::AbortedAt {
                    step: Step::Step5,
                    reason: AbortReason::Protocol(ProtocolError::AuthFailed),
                })
            {
                failed[field] += 1;
            }
        }
    }
    if failed != [160, 160] {
        return Err(format!(
            "AuthFailed for m4 {}/160, m3 {}/160",
            failed[0], failed[1]
        ));
    }
    Ok("m4 160/160, m3 160/160 AuthFailed".into())
}

fn c8_desync() -> Result<String, String> {
    let mut w = world(3, 1, 8);
    let before = w.hub().credential_table_bytes();
    let creds_before = w.sensor(0).unwrap().credentials().clone();
    for i in 0..10u64 {
        let hop = Hop::ALL[i as usize % 4];
        let script = AdversaryScript::honest().with(AdversaryAction::Drop { hop, occurrence: 0 });
        let run = w.run_session(Route::default(), &script, 800 + i).unwrap();
        if !matches!(run.outcome.abort(), Some((_, AbortReason::FrameLost))) {
            return Err(format!("dropped session {i}: {:?}", run.outcome));
        }
    }
    let run = w.run_honest(Route::default(), 900).unwrap();
    let after = w.hub().credential_table_bytes();
    let creds_after = w.sensor(0).unwrap().credentials();
    let same_creds = (&creds_before.id_n, &creds_before.a_n, &creds_before.b_n)
        == (&creds_after.id_n, &creds_after.a_n, &creds_after.b_n);
    if !run.outcome.keys_agree() || before != after || !same_creds {
        return Err(format!(
            "outcome {:?}, table unchanged {}",
            run.outcome,
            before == after
        ));
    }
    Ok(format!(
        "honest run agreed; hub table {} bytes unchanged",
        before.len()
    ))
}

fn c9_unlinkability() -> Result<String, String> {
    let mut w = world(1, 1, 9);
    let mut m1s = HashSet::new();
    let mut m2s = HashSet::new();
    for s in 0..10_000u64 {
        let run = w.run_honest(Route::default(), s).unwrap();
        let req = first_request(&run.transcript);
        m1s.insert(req.m1.into_bytes());
        m2s.insert(req.m2.into_bytes());
    }
    if m1s.len() != 10_000 || m2s.len() != 10_000 {
        return Err(format!("distinct m1 {}, m2 {}", m1s.len(), m2s.len()));
    }
    Ok("10000 distinct m1, 10000 distinct m2".into())
}

fn c10_anonymity() -> Result<String, String> {
    let deployment = Deployment::generate(2, 1, 10);
    let real = deployment.provision().unwrap();
    let original = real.sensors[0].clone();
    let mut rng = NonceSource::from_seed(1010);
    let other_id = rng.next_bits(DIGEST_BITS);
    let combined = bsn_aka::primitives::xor(&original.id_n, &original.b_n).unwrap();
    let synthetic = SensorCredentials {
        id_n: other_id.clone(),
        a_n: original.a_n.clone(),
        b_n: bsn_aka::primitives::xor(&other_id, &combined).unwrap(),
        session_key: None,
    };
    if synthetic.id_n == original.id_n {
        return Err("synthetic identity collided".into());
    }
    let fake = Provisioned {
        hub: real.hub.clone(),
        sensors: vec![synthetic, real.sensors[1].clone()],
        intermediates: real.intermediates.clone(),
    };
    let policy = FreshnessPolicy::default();
    let mut a = World::new(real, policy);
    let mut b = World::new(fake, policy);
    for seed in 0..20 {
        let ra = a.run_honest(Route::default(), seed).unwrap();
        let rb = b.run_honest(Route::default(), seed).unwrap();
        if ra.transcript.to_file_string() != rb.transcript.to_file_string()
            || ra.outcome != rb.outcome
        {
            return Err(format!("transcripts differ at seed {seed}"));
        }
    }
    Ok("20 seeds, bit-identical transcripts".into())
}

/// Hub-side check written out over raw bytes: row i matches iff
/// m2 ⊕ (kHN∥tN) ⊕ (tN∥(m1 ⊕ aN_i)) = kN_i ∥ 0^32.
fn reference_accepts(k_hn: &[u8], k_n: &[u8], a_n: &[u8], m1: &[u8], m2: &[u8], t_n: u32) -> bool {
    let t = t_n.to_be_bytes();
    let left: Vec<u8> = k_hn.iter().chain(&t).copied().collect();
    let r_n: Vec<u8> = m1.iter().zip(a_n).map(|(x, y)| x ^ y).collect();
    let right: Vec<u8> = t.iter().chain(&r_n).copied().collect();
    let want: Vec<u8> = k_n.iter().chain(&[0u8; 4]).copied().collect();
    (0..24).all(|i| m2[i] ^ left[i] ^ right[i] == want[i])
}

fn c11_lookup_oracle() -> Result<String, String> {
    const TRIALS: usize = 100_000;
    let mut rng = NonceSource::from_seed(11);
    let mut hub = init_hub(rng.next_bits(DIGEST_BITS));
    let mut sensors = Vec::new();
    for _ in 0..8 {
        let (id, k) = (rng.next_bits(DIGEST_BITS), rng.next_bits(DIGEST_BITS));
        sensors.push((hub.register_sensor(id, k.clone()).unwrap(), k));
    }
    let k_hn = hub.master_key().as_bytes().to_vec();
    let mut meter = OpMeter::new();
    let mut false_accepts = 0;
    let mut missed = 0;
    let mut oracle_disagreements = 0;
    for trial in 0..TRIALS {
        let idx = trial % sensors.len();
        let (creds, k_n) = &sensors[idx];
        let t_n = Timestamp(
            rng.next_bits(32)
                .as_bytes()
                .iter()
                .fold(0u32, |a, b| a << 8 | *b as u32),
        );
        let (msg, _) = sn_request(creds, t_n, rng.next_nonce().0, &mut meter);
        let found = lookup_sensor(&hub, &msg.m1, &msg.m2, msg.t_n, &mut meter);
        if found != Some(idx) {
            missed += 1;
        }
        let reference = reference_accepts(
            &k_hn,
            k_n.as_bytes(),
            creds.a_n.as_bytes(),
            msg.m1.as_bytes(),
            msg.m2.as_bytes(),
            t_n.0,
        );
        if !reference {
            oracle_disagreements += 1;
        }

        // wrong pair: an unregistered sensor built under the same master key
        // on odd trials, random frame contents on even ones
        let (m1, m2) = if trial % 2 == 1 {
            let (id, k) = (rng.next_bits(DIGEST_BITS), rng.next_bits(DIGEST_BITS));
            let a_n = bsn_aka::primitives::hash(&bsn_aka::primitives::concat(&id, &k));
            let stranger = SensorCredentials {
                b_n: bsn_aka::primitives::xor(
                    &bsn_aka::primitives::xor(hub.master_key(), &k).unwrap(),
                    &id,
                )
                .unwrap(),
                id_n: id,
                a_n,
                session_key: None,
            };
            let (m, _) = sn_request(&stranger, t_n, rng.next_nonce().0, &mut meter);
            (m.m1, m.m2)
        } else {
            (rng.next_bits(DIGEST_BITS), rng.next_bits(192))
        };
        if lookup_sensor(&hub, &m1, &m2, t_n, &mut meter).is_some() {
            false_accepts += 1;
        }
        let any_reference = sensors.iter().any(|(c, k)| {
            reference_accepts(
                &k_hn,
                k.as_bytes(),
                c.a_n.as_bytes(),
                m1.as_bytes(),
                m2.as_bytes(),
                t_n.0,
            )
        });
        if any_reference {
            oracle_disagreements += 1;
        }
    }
    if false_accepts != 0 || missed != 0 || oracle_disagreements != 0 {
        return Err(format!(
            "missed {missed}, false accepts {false_accepts}, oracle disagreements {oracle_disagreements}"
        ));
    }
    Ok(format!(
        "{TRIALS} genuine accepted, {TRIALS} wrong rejected, 0 false accepts"
    ))
}

type Criterion = (&'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 11] = [
        ("key agreement, 1000 honest sessions", c1_key_agreement),
        ("hop sizes 384/400/368/352", c2_hop_sizes),
        ("hash/xor counts", c3_op_counts),
        ("time and energy", c4_time_energy),
        ("storage accounting", c5_storage),
        ("replay rejection", c6_replay),
        ("tamper detection", c7_tamper),
        ("desync resilience", c8_desync),
        ("unlinkability", c9_unlinkability),
        ("anonymity", c10_anonymity),
        ("lookup oracle equivalence", c11_lookup_oracle),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
