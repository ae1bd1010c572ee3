//! C ABI over `bsn_aka`.
//!
//! A `BsnWorld` is an opaque handle owning one simulated deployment. Every
//! fallible call returns a `BsnStatus`; on failure a description is
//! available from `bsn_last_error_message` on the same thread. Strings
//! returned by the library are freed with `bsn_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bsn_aka::nodes::ProtocolError;
use bsn_aka::primitives::{self, BitString};
use bsn_aka::registry::Deployment;
use bsn_aka::simnet::{
    AbortReason, AdversaryScript, Route, SessionOutcome, SessionRun, SimError, Step, World,
};
use bsn_aka::FreshnessPolicy;

pub const BSN_KEY_BYTES: usize = 20;
pub const BSN_DEFAULT_DELTA_T: u32 = 5;
pub const BSN_DEFAULT_HOP_DELAY: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidDeployment = 3,
    InvalidPolicy = 4,
    InvalidScript = 5,
    NoSuchNode = 6,
    NoSession = 7,
    InvalidArgument = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsnOutcome {
    /// Both ends hold the same session key.
    Agreed = 0,
    /// The sensor finished but its key differs from the hub's.
    KeysDiffer = 1,
    /// Hub-only replay run that the hub authenticated.
    HubAccepted = 2,
    Aborted = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsnAbortReason {
    None = 0,
    UnknownIntermediate = 1,
    StaleTimestamp = 2,
    NoMatchingSensor = 3,
    WrongIntermediate = 4,
    AuthFailed = 5,
    NoPendingSession = 6,
    Malformed = 7,
    FrameLost = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsnHop {
    SnToIn = 0,
    InToHn = 1,
    HnToIn = 2,
    InToSn = 3,
}

/// Result of one run. `step` is 1..5 for aborts and 0 otherwise. Key
/// buffers are zero when the corresponding flag is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BsnSessionResult {
    pub outcome: BsnOutcome,
    pub step: u8,
    pub reason: BsnAbortReason,
    pub has_sn_key: bool,
    pub has_hn_key: bool,
    pub sn_key: [u8; BSN_KEY_BYTES],
    pub hn_key: [u8; BSN_KEY_BYTES],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BsnStorage {
    pub sensor_bits: u64,
    pub intermediate_bits: u64,
    pub hub_bits: u64,
}

/// Opaque deployment handle.
pub struct BsnWorld {
    world: World,
    last: Option<SessionRun>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: BsnStatus, message: impl Into<String>) -> BsnStatus {
    set_error(message);
    status
}

fn guard(body: impl FnOnce() -> BsnStatus) -> BsnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(BsnStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, BsnStatus> {
    if p.is_null() {
        return Err(fail(BsnStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(BsnStatus::InvalidUtf8, e.to_string()))
}

fn policy(delta_t: u32, hop_delay: u32) -> Result<FreshnessPolicy, BsnStatus> {
    FreshnessPolicy::new(delta_t, hop_delay)
        .map_err(|e| fail(BsnStatus::InvalidPolicy, e.to_string()))
}

fn sim_error(e: SimError) -> BsnStatus {
    let status = match e {
        SimError::NothingToReplay => BsnStatus::NoSession,
        _ => BsnStatus::NoSuchNode,
    };
    fail(status, e.to_string())
}

fn publish(out: *mut *mut BsnWorld, world: World) -> BsnStatus {
    let handle = Box::new(BsnWorld { world, last: None });
    // SAFETY: caller checked `out` is non-null
    unsafe { *out = Box::into_raw(handle) };
    BsnStatus::Ok
}

/// Generates a deployment of `sensors` sensors and `intermediates` relays
/// from `seed` and stores a new handle in `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_generate(
    sensors: usize,
    intermediates: usize,
    seed: u64,
    delta_t: u32,
    hop_delay: u32,
    out: *mut *mut BsnWorld,
) -> BsnStatus {
    guard(|| {
        if out.is_null() {
            return fail(BsnStatus::NullPointer, "out is null");
        }
        if sensors == 0 || intermediates == 0 {
            return fail(
                BsnStatus::InvalidArgument,
                "need at least one sensor and one intermediate",
            );
        }
        let policy = match policy(delta_t, hop_delay) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match World::from_deployment(&Deployment::generate(sensors, intermediates, seed), policy) {
            Ok(w) => publish(out, w),
            Err(e) => fail(BsnStatus::InvalidDeployment, e.to_string()),
        }
    })
}

/// Builds a world from deployment-file text.
///
/// # Safety
/// `deployment_toml` must be a NUL-terminated string and `out` a valid
/// pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_from_deployment(
    deployment_toml: *const c_char,
    delta_t: u32,
    hop_delay: u32,
    out: *mut *mut BsnWorld,
) -> BsnStatus {
    guard(|| {
        if out.is_null() {
            return fail(BsnStatus::NullPointer, "out is null");
        }
        let text = match str_arg(deployment_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let policy = match policy(delta_t, hop_delay) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Deployment::from_toml(text).and_then(|d| World::from_deployment(&d, policy)) {
            Ok(w) => publish(out, w),
            Err(e) => fail(BsnStatus::InvalidDeployment, e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `world` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_free(world: *mut BsnWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Number of sensors, or 0 for a null handle.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_sensor_count(world: *const BsnWorld) -> usize {
    world.as_ref().map_or(0, |w| w.world.sensor_count())
}

fn step_number(step: Step) -> u8 {
    match step {
        Step::Step1 => 1,
        Step::Step2 => 2,
        Step::Step3 => 3,
        Step::Step4 => 4,
        Step::Step5 => 5,
    }
}

fn reason_code(reason: &AbortReason) -> BsnAbortReason {
    match reason {
        AbortReason::Malformed(_) => BsnAbortReason::Malformed,
        AbortReason::FrameLost => BsnAbortReason::FrameLost,
        AbortReason::Protocol(p) => match p {
            ProtocolError::UnknownIntermediate(_) => BsnAbortReason::UnknownIntermediate,
            ProtocolError::StaleTimestamp { .. } => BsnAbortReason::StaleTimestamp,
            ProtocolError::NoMatchingSensor => BsnAbortReason::NoMatchingSensor,
            ProtocolError::WrongIntermediate { .. } => BsnAbortReason::WrongIntermediate,
            ProtocolError::AuthFailed => BsnAbortReason::AuthFailed,
            ProtocolError::NoPendingSession => BsnAbortReason::NoPendingSession,
        },
    }
}

fn key_bytes(key: &BitString) -> [u8; BSN_KEY_BYTES] {
    let mut out = [0; BSN_KEY_BYTES];
    out.copy_from_slice(key.as_bytes());
    out
}

fn summarize(outcome: &SessionOutcome) -> BsnSessionResult {
    let mut r = BsnSessionResult {
        outcome: BsnOutcome::Aborted,
        step: 0,
        reason: BsnAbortReason::None,
        has_sn_key: false,
        has_hn_key: false,
        sn_key: [0; BSN_KEY_BYTES],
        hn_key: [0; BSN_KEY_BYTES],
    };
    match outcome {
        SessionOutcome::AgreedKeys { sn_key, hn_key } => {
            r.outcome = if outcome.keys_agree() {
                BsnOutcome::Agreed
            } else {
                BsnOutcome::KeysDiffer
            };
            r.has_sn_key = true;
            r.sn_key = key_bytes(&sn_key.0);
            if let Some(h) = hn_key {
                r.has_hn_key = true;
                r.hn_key = key_bytes(&h.0);
            }
        }
        SessionOutcome::HubAccepted { hn_key } => {
            r.outcome = BsnOutcome::HubAccepted;
            r.has_hn_key = true;
            r.hn_key = key_bytes(&hn_key.0);
        }
        SessionOutcome::AbortedAt { step, reason } => {
            r.step = step_number(*step);
            r.reason = reason_code(reason);
        }
    }
    r
}

/// Runs one handshake for `sensor` via `intermediate`. `script_toml` is
/// an adversary script (`[[actions]]` tables) or null for an honest run.
///
/// # Safety
/// `world` must be a live handle, `script_toml` null or NUL-terminated,
/// and `result` a valid pointer to a `BsnSessionResult`.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_run(
    world: *mut BsnWorld,
    sensor: usize,
    intermediate: usize,
    seed: u64,
    script_toml: *const c_char,
    result: *mut BsnSessionResult,
) -> BsnStatus {
    guard(|| {
        let (Some(w), false) = (world.as_mut(), result.is_null()) else {
            return fail(BsnStatus::NullPointer, "world or result is null");
        };
        let script = if script_toml.is_null() {
            AdversaryScript::honest()
        } else {
            let text = match str_arg(script_toml) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match AdversaryScript::from_toml(text) {
                Ok(s) => s,
                Err(e) => return fail(BsnStatus::InvalidScript, e),
            }
        };
        match w
            .world
            .run_session(Route::new(sensor, intermediate), &script, seed)
        {
            Ok(run) => {
                *result = summarize(&run.outcome);
                w.last = Some(run);
                BsnStatus::Ok
            }
            Err(e) => sim_error(e),
        }
    })
}

/// Replays the IN→HN frame of the most recent run into the hub at time
/// `at`.
///
/// # Safety
/// `world` must be a live handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_replay_last(
    world: *mut BsnWorld,
    at: u64,
    result: *mut BsnSessionResult,
) -> BsnStatus {
    guard(|| {
        let (Some(w), false) = (world.as_mut(), result.is_null()) else {
            return fail(BsnStatus::NullPointer, "world or result is null");
        };
        let Some(last) = &w.last else {
            return fail(BsnStatus::NoSession, "no session has run yet");
        };
        let transcript = last.transcript.clone();
        match w.world.replay_attack(&transcript, at) {
            Ok(run) => {
                *result = summarize(&run.outcome);
                w.last = Some(run);
                BsnStatus::Ok
            }
            Err(e) => sim_error(e),
        }
    })
}

fn owned_string(text: String) -> *mut c_char {
    CString::new(text).map_or(ptr::null_mut(), CString::into_raw)
}

/// Cost report of the most recent run as TOML text, or null if nothing
/// has run. Free with `bsn_string_free`.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_last_report(world: *const BsnWorld) -> *mut c_char {
    match world.as_ref().and_then(|w| w.last.as_ref()) {
        Some(run) => owned_string(run.costs.to_text()),
        None => {
            set_error("no session has run yet");
            ptr::null_mut()
        }
    }
}

/// Transcript of the most recent run, one `direction,time,hex` line per
/// delivered frame, or null if nothing has run.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsn_world_last_transcript(world: *const BsnWorld) -> *mut c_char {
    match world.as_ref().and_then(|w| w.last.as_ref()) {
        Some(run) => owned_string(run.transcript.to_file_string()),
        None => {
            set_error("no session has run yet");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn bsn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Storage footprint in bits for `sensors` sensors and `intermediates`
/// relays.
#[no_mangle]
pub extern "C" fn bsn_storage(sensors: u64, intermediates: u64) -> BsnStorage {
    let s = bsn_aka::metrics::storage_account(sensors, intermediates);
    BsnStorage {
        sensor_bits: s.sensor,
        intermediate_bits: s.intermediate,
        hub_bits: s.hub,
    }
}

/// SHA-1 of `len` bytes at `data`, written to the 20 bytes at `out`.
///
/// # Safety
/// `data` must point to `len` readable bytes (or be null with `len` 0)
/// and `out` to 20 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bsn_sha1(data: *const u8, len: usize, out: *mut u8) -> BsnStatus {
    guard(|| {
        if out.is_null() || (data.is_null() && len != 0) {
            return fail(BsnStatus::NullPointer, "null buffer");
        }
        let input = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(data, len)
        };
        let digest = primitives::hash(&BitString::from_byte_slice(input));
        ptr::copy_nonoverlapping(digest.as_bytes().as_ptr(), out, BSN_KEY_BYTES);
        BsnStatus::Ok
    })
}

/// Description of the last failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn bsn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Encoded frame size in bits on `hop`.
#[no_mangle]
pub extern "C" fn bsn_hop_bits(hop: BsnHop) -> u32 {
    let kind = match hop {
        BsnHop::SnToIn => bsn_aka::wire::FrameKind::Message1,
        BsnHop::InToHn => bsn_aka::wire::FrameKind::Message2,
        BsnHop::HnToIn => bsn_aka::wire::FrameKind::Message3,
        BsnHop::InToSn => bsn_aka::wire::FrameKind::Message4,
    };
    kind.bits() as u32
}
