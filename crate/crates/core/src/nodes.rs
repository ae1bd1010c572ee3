//! The sensor, intermediate and hub sides of the authentication and
//! key-agreement handshake.
//!
//! ```text
//! SN  --<m1, m2, tN>-------->  IN  --<m1, m2, tN, idIN>-->  HN
//! SN  <--<m3, m4, tH>--------  IN  <--<m3, m4, tH, idIN>--  HN
//! ```
//!
//! Sensor side, step 1:
//!   `m1 = aN ⊕ rN`, `m2 = ((idN ⊕ bN) ∥ tN) ⊕ (tN ∥ rN)`
//!
//! Hub side, step 3: check `idIN` and `|tC − tN| < Δt`, then find the table
//! row whose `(kN, aN)` explains `m2`. With `D = m2 ⊕ (kHN ∥ tN)` computed
//! once, row `i` matches iff `D ⊕ (tN ∥ (m1 ⊕ aNi)) = kNi ∥ 0^32`. Then
//!   `rN = m1 ⊕ aN`, `m3 = aN ⊕ rH`, `m4 = kHN ⊕ kN ⊕ h(aN ∥ rN ∥ rH)`,
//!   `kS = h(m1 ∥ rN ∥ aN ∥ rH ∥ tN ∥ m4 ∥ tH)`.
//!
//! Sensor side, step 5: check `|tC − tH| < Δt`, `rH = m3 ⊕ aN`, verify
//! `m4 ⊕ idN ⊕ bN = h(aN ∥ rN ∥ rH)` and derive the same `kS`.
//!
//! XOR accounting follows the metered calls exactly: 6 per sensor session
//! and `2n + 5` per hub session for a table of `n` rows (every row is
//! scanned, even after a match).

use thiserror::Error;

use crate::primitives::{
    concat, concat_all, BitString, Clock, NonceSource, OpMeter, Timestamp, TIMESTAMP_BITS,
};
use crate::registry::{HubState, IntermediateState, SensorCredentials};
use crate::wire::{Message1, Message2, Message3, Message4};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("intermediate {0} is not registered at the hub")]
    UnknownIntermediate(String),
    #[error("stale timestamp {stamp} received at {received_at}")]
    StaleTimestamp {
        received_at: Timestamp,
        stamp: Timestamp,
    },
    #[error("no registered sensor matches the request")]
    NoMatchingSensor,
    #[error("frame addressed to intermediate {got}, this node is {expected}")]
    WrongIntermediate { expected: String, got: String },
    #[error("hub response failed verification")]
    AuthFailed,
    #[error("no authentication in progress")]
    NoPendingSession,
}

impl ProtocolError {
    /// Stable name used in reports and exit messages.
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolError::UnknownIntermediate(_) => "UnknownIntermediate",
            ProtocolError::StaleTimestamp { .. } => "StaleTimestamp",
            ProtocolError::NoMatchingSensor => "NoMatchingSensor",
            ProtocolError::WrongIntermediate { .. } => "WrongIntermediate",
            ProtocolError::AuthFailed => "AuthFailed",
            ProtocolError::NoPendingSession => "NoPendingSession",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("freshness window must be positive")]
pub struct InvalidPolicy;

/// Freshness window `Δt` and the simulated per-hop latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreshnessPolicy {
    delta_t: u32,
    hop_delay: u32,
}

impl Default for FreshnessPolicy {
    fn default() -> Self {
        FreshnessPolicy {
            delta_t: 5,
            hop_delay: 1,
        }
    }
}

impl FreshnessPolicy {
    pub fn new(delta_t: u32, hop_delay: u32) -> Result<Self, InvalidPolicy> {
        if delta_t == 0 {
            return Err(InvalidPolicy);
        }
        Ok(FreshnessPolicy { delta_t, hop_delay })
    }

    pub fn delta_t(&self) -> u32 {
        self.delta_t
    }

    pub fn hop_delay(&self) -> u32 {
        self.hop_delay
    }

    /// Strict `|received_at − stamp| < Δt`.
    pub fn is_fresh(&self, received_at: Timestamp, stamp: Timestamp) -> bool {
        received_at.distance(stamp) < self.delta_t
    }

    fn check(&self, received_at: Timestamp, stamp: Timestamp) -> Result<(), ProtocolError> {
        if self.is_fresh(received_at, stamp) {
            Ok(())
        } else {
            Err(ProtocolError::StaleTimestamp { received_at, stamp })
        }
    }
}

/// Sensor-side state between sending the request and verifying the reply.
/// Consumed by [`sn_complete_auth`] whatever the result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingSession {
    r_n: BitString,
    t_n: Timestamp,
    m1: BitString,
}

impl PendingSession {
    pub fn nonce(&self) -> &BitString {
        &self.r_n
    }

    pub fn timestamp(&self) -> Timestamp {
        self.t_n
    }

    pub fn m1(&self) -> &BitString {
        &self.m1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionKey(pub BitString);

impl SessionKey {
    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

fn xor(meter: &mut OpMeter, a: &BitString, b: &BitString) -> BitString {
    meter.xor(a, b).expect("protocol operands share a width")
}

#[allow(clippy::too_many_arguments)]
fn derive_session_key(
    meter: &mut OpMeter,
    m1: &BitString,
    r_n: &BitString,
    a_n: &BitString,
    r_h: &BitString,
    t_n: Timestamp,
    m4: &BitString,
    t_h: Timestamp,
) -> SessionKey {
    let input = concat_all([m1, r_n, a_n, r_h, &t_n.to_bits(), m4, &t_h.to_bits()]);
    SessionKey(meter.hash(&input))
}

/// Step 1 with an explicit nonce and timestamp.
pub fn sn_request(
    creds: &SensorCredentials,
    t_n: Timestamp,
    r_n: BitString,
    meter: &mut OpMeter,
) -> (Message1, PendingSession) {
    let t_bits = t_n.to_bits();
    let m1 = xor(meter, &creds.a_n, &r_n);
    let masked_id = xor(meter, &creds.id_n, &creds.b_n);
    let m2 = xor(meter, &concat(&masked_id, &t_bits), &concat(&t_bits, &r_n));
    let msg = Message1 {
        m1: m1.clone(),
        m2,
        t_n,
    };
    (msg, PendingSession { r_n, t_n, m1 })
}

/// Step 1: stamp the request with the clock and a fresh nonce.
pub fn sn_begin_auth(
    creds: &SensorCredentials,
    clock: &Clock,
    nonces: &mut NonceSource,
    meter: &mut OpMeter,
) -> (Message1, PendingSession) {
    let t_n = clock.now();
    let r_n = nonces.next_nonce().0;
    sn_request(creds, t_n, r_n, meter)
}

/// Step 2: append the intermediate's ID, leaving the rest untouched.
pub fn in_forward_up(state: &IntermediateState, msg: &Message1) -> Message2 {
    Message2 {
        m1: msg.m1.clone(),
        m2: msg.m2.clone(),
        t_n: msg.t_n,
        id_in: state.id_in.clone(),
    }
}

/// Scans every row of the hub table and returns the first whose
/// `(kN, aN)` reproduces `m2`.
pub fn lookup_sensor(
    hub: &HubState,
    m1: &BitString,
    m2: &BitString,
    t_n: Timestamp,
    meter: &mut OpMeter,
) -> Option<usize> {
    let t_bits = t_n.to_bits();
    let unmasked = xor(meter, m2, &concat(hub.master_key(), &t_bits));
    let pad = BitString::zeros(TIMESTAMP_BITS);
    let mut found = None;
    for (i, entry) in hub.table().iter().enumerate() {
        let r_i = xor(meter, m1, &entry.a_n);
        let residue = xor(meter, &unmasked, &concat(&t_bits, &r_i));
        if found.is_none() && residue == concat(&entry.k_n, &pad) {
            found = Some(i);
        }
    }
    found
}

/// What the hub produces for an accepted request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubResponse {
    pub message: Message3,
    pub session_key: SessionKey,
    /// Table row that authenticated.
    pub entry: usize,
}

/// Step 3 with an explicit hub nonce.
pub fn hn_respond(
    hub: &mut HubState,
    msg: &Message2,
    t_c: Timestamp,
    r_h: impl FnOnce() -> BitString,
    policy: &FreshnessPolicy,
    meter: &mut OpMeter,
) -> Result<HubResponse, ProtocolError> {
    if !hub.knows_intermediate(&msg.id_in) {
        return Err(ProtocolError::UnknownIntermediate(msg.id_in.to_hex()));
    }
    policy.check(t_c, msg.t_n)?;
    let entry = lookup_sensor(hub, &msg.m1, &msg.m2, msg.t_n, meter)
        .ok_or(ProtocolError::NoMatchingSensor)?;
    let row = &hub.table()[entry];
    let (a_n, k_n) = (row.a_n.clone(), row.k_n.clone());

    let r_n = xor(meter, &msg.m1, &a_n);
    let t_h = t_c;
    let r_h = r_h();
    let m3 = xor(meter, &a_n, &r_h);
    let proof = meter.hash(&concat_all([&a_n, &r_n, &r_h]));
    let masked = xor(meter, hub.master_key(), &k_n);
    let m4 = xor(meter, &masked, &proof);
    let key = derive_session_key(meter, &msg.m1, &r_n, &a_n, &r_h, msg.t_n, &m4, t_h);
    hub.store_session_key(entry, key.0.clone());
    Ok(HubResponse {
        message: Message3 {
            m3,
            m4,
            t_h,
            id_in: msg.id_in.clone(),
        },
        session_key: key,
        entry,
    })
}

/// Step 3: authenticate the sensor and answer.
pub fn hn_process(
    hub: &mut HubState,
    msg: &Message2,
    clock: &Clock,
    nonces: &mut NonceSource,
    policy: &FreshnessPolicy,
    meter: &mut OpMeter,
) -> Result<HubResponse, ProtocolError> {
    hn_respond(
        hub,
        msg,
        clock.now(),
        || nonces.next_nonce().0,
        policy,
        meter,
    )
}

/// Step 4: strip the intermediate ID if it is ours.
pub fn in_forward_down(
    state: &IntermediateState,
    msg: &Message3,
) -> Result<Message4, ProtocolError> {
    if msg.id_in != state.id_in {
        return Err(ProtocolError::WrongIntermediate {
            expected: state.id_in.to_hex(),
            got: msg.id_in.to_hex(),
        });
    }
    Ok(Message4 {
        m3: msg.m3.clone(),
        m4: msg.m4.clone(),
        t_h: msg.t_h,
    })
}

/// Step 5: verify the hub and derive the session key.
pub fn sn_complete_auth(
    creds: &mut SensorCredentials,
    pending: PendingSession,
    msg: &Message4,
    clock: &Clock,
    policy: &FreshnessPolicy,
    meter: &mut OpMeter,
) -> Result<SessionKey, ProtocolError> {
    policy.check(clock.now(), msg.t_h)?;
    let r_h = xor(meter, &msg.m3, &creds.a_n);
    let t = xor(meter, &msg.m4, &creds.id_n);
    let lhs = xor(meter, &t, &creds.b_n);
    let rhs = meter.hash(&concat_all([&creds.a_n, &pending.r_n, &r_h]));
    if lhs != rhs {
        return Err(ProtocolError::AuthFailed);
    }
    let key = derive_session_key(
        meter,
        &pending.m1,
        &pending.r_n,
        &creds.a_n,
        &r_h,
        pending.t_n,
        &msg.m4,
        msg.t_h,
    );
    creds.session_key = Some(key.0.clone());
    Ok(key)
}

/// Sensor node with at most one handshake in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorNode {
    creds: SensorCredentials,
    pending: Option<PendingSession>,
}

impl SensorNode {
    pub fn new(creds: SensorCredentials) -> Self {
        SensorNode {
            creds,
            pending: None,
        }
    }

    pub fn credentials(&self) -> &SensorCredentials {
        &self.creds
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Starts (or restarts) a handshake. Any earlier pending state is dropped.
    pub fn begin(
        &mut self,
        clock: &Clock,
        nonces: &mut NonceSource,
        meter: &mut OpMeter,
    ) -> Message1 {
        let (msg, pending) = sn_begin_auth(&self.creds, clock, nonces, meter);
        self.pending = Some(pending);
        msg
    }

    /// Finishes the pending handshake. A rejected reply leaves it pending,
    /// so an injected frame cannot cancel a genuine exchange.
    pub fn complete(
        &mut self,
        msg: &Message4,
        clock: &Clock,
        policy: &FreshnessPolicy,
        meter: &mut OpMeter,
    ) -> Result<SessionKey, ProtocolError> {
        let pending = self
            .pending
            .clone()
            .ok_or(ProtocolError::NoPendingSession)?;
        let key = sn_complete_auth(&mut self.creds, pending, msg, clock, policy, meter)?;
        self.pending = None;
        Ok(key)
    }

    /// Pending `m1`, if a handshake is in flight.
    pub fn pending_m1(&self) -> Option<&BitString> {
        self.pending.as_ref().map(|p| &p.m1)
    }
}
