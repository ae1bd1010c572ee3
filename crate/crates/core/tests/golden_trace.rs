//! Frozen trace for deployment seed 7, session seed 7. The expected frames
//! and key were computed outside this crate with Python's hashlib straight
//! from the message formulas, given the keys and nonces below.

use bsn_aka::nodes::{hn_respond, in_forward_down, in_forward_up, sn_complete_auth, sn_request};
use bsn_aka::primitives::{BitString, Clock, OpMeter, Timestamp, DIGEST_BITS};
use bsn_aka::registry::{init_hub, Deployment, IntermediateState};
use bsn_aka::simnet::{Route, SessionOutcome, World};
use bsn_aka::wire::Hop;
use bsn_aka::FreshnessPolicy;

const HUB_KEY: &str = "295db38d6fc7b4f202e78c20ec26c444791ad16e";
const ID_N: &str = "5c24b5e8feff3cee29bd341e61a0623947a5820b";
const K_N: &str = "3ab90e1d9bc09947c8cd7ca25d7c7ae4640a7895";
const ID_IN: &str = "992b";
const R_N: &str = "19454a27b752f905909507d6160ddc888e2df8b7";
const R_H: &str = "7e6c4af2db0bd76544c83f6b268eb93927957ccc";

const A_N: &str = "806f0f9c7ffe69348fb99083b8e7d1bd59c80c76";
const B_N: &str = "4fc008780af8115be397c49cd0fadc995ab52bf0";
const MSG1: &str = "992a45bbc8ac90311f2c9755aeea0d35d7e5f4c113e4bd90ed4267927d78098721cfb9760b1d75738e2df8b700000000";
const MSG2: &str = "992a45bbc8ac90311f2c9755aeea0d35d7e5f4c113e4bd90ed4267927d78098721cfb9760b1d75738e2df8b700000000992b";
const MSG3: &str =
    "fe03456ea4f5be51cb71afe89e6968847e5d70ba320069f748a5e11d8984c95c72de493f47f1708300000002992b";
const MSG4: &str =
    "fe03456ea4f5be51cb71afe89e6968847e5d70ba320069f748a5e11d8984c95c72de493f47f1708300000002";
const SESSION_KEY: &str = "7306024470700ecc2ba78b4510b0cfedd899a7a2";

fn b160(hex: &str) -> BitString {
    BitString::from_hex(DIGEST_BITS, hex).unwrap()
}

#[test]
fn handshake_functions_reproduce_reference_frames() {
    let policy = FreshnessPolicy::default();
    let mut hub = init_hub(b160(HUB_KEY));
    let mut creds = hub.register_sensor(b160(ID_N), b160(K_N)).unwrap();
    assert_eq!(creds.a_n.to_hex(), A_N);
    assert_eq!(creds.b_n.to_hex(), B_N);
    let relay: IntermediateState = hub
        .register_intermediate(BitString::from_hex(16, ID_IN).unwrap())
        .unwrap();

    let mut meter = OpMeter::new();
    let (m1, pending) = sn_request(&creds, Timestamp(0), b160(R_N), &mut meter);
    assert_eq!(hex::encode(m1.encode()), MSG1);
    let m2 = in_forward_up(&relay, &m1);
    assert_eq!(hex::encode(m2.encode()), MSG2);

    let resp = hn_respond(
        &mut hub,
        &m2,
        Timestamp(2),
        || b160(R_H),
        &policy,
        &mut meter,
    )
    .unwrap();
    assert_eq!(hex::encode(resp.message.encode()), MSG3);
    assert_eq!(resp.session_key.0.to_hex(), SESSION_KEY);
    let m4 = in_forward_down(&relay, &resp.message).unwrap();
    assert_eq!(hex::encode(m4.encode()), MSG4);

    let key = sn_complete_auth(
        &mut creds,
        pending,
        &m4,
        &Clock::starting_at(4),
        &policy,
        &mut meter,
    )
    .unwrap();
    assert_eq!(key.0.to_hex(), SESSION_KEY);
}

#[test]
fn seeded_world_emits_reference_transcript() {
    let deployment = Deployment::generate(1, 1, 7);
    assert_eq!(deployment.hub_key.to_hex(), HUB_KEY);
    assert_eq!(deployment.sensors[0].id.to_hex(), ID_N);
    assert_eq!(deployment.sensors[0].key.to_hex(), K_N);
    assert_eq!(deployment.intermediates[0].id.to_hex(), ID_IN);

    let mut world = World::from_deployment(&deployment, FreshnessPolicy::default()).unwrap();
    let run = world.run_honest(Route::default(), 7).unwrap();
    let expected = format!("SN->IN,1,{MSG1}\nIN->HN,2,{MSG2}\nHN->IN,3,{MSG3}\nIN->SN,4,{MSG4}\n");
    assert_eq!(run.transcript.to_file_string(), expected);
    let hops: Vec<Hop> = run.transcript.records().iter().map(|r| r.hop).collect();
    assert_eq!(hops, Hop::ALL);
    match run.outcome {
        SessionOutcome::AgreedKeys { sn_key, hn_key } => {
            assert_eq!(sn_key.0.to_hex(), SESSION_KEY);
            assert_eq!(hn_key.unwrap().0.to_hex(), SESSION_KEY);
        }
        other => panic!("{other:?}"),
    }
}
