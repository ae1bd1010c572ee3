//! Cost accounting: primitive counts, bandwidth, storage, and the analytic
//! time/energy model.
//!
//! Time is `hash_ms` per hash (XOR time is treated as zero) and energy is
//! `time · active_power / 1000`. The defaults describe a 72 MHz Cortex-M3:
//! 0.06 ms per SHA-1 call and 3.3 V × 36 mA = 118.8 mW active power.

use std::fmt::Write as _;

use crate::primitives::{OpMeter, DIGEST_BITS, INTERMEDIATE_ID_BITS};
use crate::registry::SensorCredentials;
use crate::simnet::{Origin, TranscriptRecord};
use crate::wire::Hop;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub hash_ms: f64,
    pub active_power_mw: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            hash_ms: 0.06,
            active_power_mw: 118.8,
        }
    }
}

impl CostModel {
    pub fn time_ms(&self, hashes: u64) -> f64 {
        self.hash_ms * hashes as f64
    }

    pub fn energy_mj(&self, time_ms: f64) -> f64 {
        time_ms * self.active_power_mw / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sensor,
    Intermediate,
    Hub,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Sensor, Role::Intermediate, Role::Hub];

    pub fn label(self) -> &'static str {
        match self {
            Role::Sensor => "SN",
            Role::Intermediate => "IN",
            Role::Hub => "HN",
        }
    }

    /// Which role originates honest frames on `hop`.
    pub fn sender_of(hop: Hop) -> Role {
        match hop {
            Hop::SnToIn => Role::Sensor,
            Hop::InToHn | Hop::InToSn => Role::Intermediate,
            Hop::HnToIn => Role::Hub,
        }
    }
}

/// Bits per hop, indexed in protocol order (hop1 = SN→IN … hop4 = IN→SN).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HopBits(pub [u64; 4]);

impl HopBits {
    pub fn get(&self, hop: Hop) -> u64 {
        self.0[hop.index()]
    }

    fn add(&mut self, hop: Hop, bits: u64) {
        self.0[hop.index()] += bits;
    }
}

/// Every transmission on every hop, replays and drops included.
pub fn bandwidth_account<'a>(records: impl IntoIterator<Item = &'a TranscriptRecord>) -> HopBits {
    let mut out = HopBits::default();
    for r in records {
        out.add(r.hop, r.bytes.len() as u64 * 8);
    }
    out
}

fn bandwidth_by_role<'a>(
    records: impl IntoIterator<Item = &'a TranscriptRecord>,
    role: Role,
) -> HopBits {
    let mut out = HopBits::default();
    for r in records {
        if r.origin == Origin::Honest && Role::sender_of(r.hop) == role {
            out.add(r.hop, r.bytes.len() as u64 * 8);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StorageAccount {
    pub sensor: u64,
    pub intermediate: u64,
    pub hub: u64,
}

/// Memory footprint for `sensors` sensors and `intermediates` relays.
pub fn storage_account(sensors: u64, intermediates: u64) -> StorageAccount {
    StorageAccount {
        sensor: SensorCredentials::STORAGE_BITS,
        intermediate: INTERMEDIATE_ID_BITS as u64,
        hub: 3 * DIGEST_BITS as u64 * sensors
            + INTERMEDIATE_ID_BITS as u64 * intermediates
            + DIGEST_BITS as u64,
    }
}

/// Raw per-role counters for one session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionInstrumentation {
    pub sensor: OpMeter,
    pub intermediate: OpMeter,
    pub hub: OpMeter,
}

impl SessionInstrumentation {
    pub fn meter(&self, role: Role) -> OpMeter {
        match role {
            Role::Sensor => self.sensor,
            Role::Intermediate => self.intermediate,
            Role::Hub => self.hub,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleCost {
    pub hash_count: u64,
    pub xor_count: u64,
    pub bits_sent: HopBits,
    pub storage_bits: u64,
    pub time_ms: f64,
    pub energy_mj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub sensor: RoleCost,
    pub intermediate: RoleCost,
    pub hub: RoleCost,
    /// All transmissions per hop.
    pub bandwidth: HopBits,
}

pub fn collect(
    instr: &SessionInstrumentation,
    records: &[TranscriptRecord],
    storage: &StorageAccount,
    model: &CostModel,
) -> CostReport {
    let role_cost = |role: Role, storage_bits: u64| {
        let m = instr.meter(role);
        let time_ms = model.time_ms(m.hashes);
        RoleCost {
            hash_count: m.hashes,
            xor_count: m.xors,
            bits_sent: bandwidth_by_role(records, role),
            storage_bits,
            time_ms,
            energy_mj: model.energy_mj(time_ms),
        }
    };
    CostReport {
        sensor: role_cost(Role::Sensor, storage.sensor),
        intermediate: role_cost(Role::Intermediate, storage.intermediate),
        hub: role_cost(Role::Hub, storage.hub),
        bandwidth: bandwidth_account(records),
    }
}

/// Shortest decimal form after rounding to 1e-9, so reports stay stable
/// and readable (0.014256 rather than 0.014255999999999998).
pub fn format_real(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    if r == r.trunc() {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

impl CostReport {
    pub fn role(&self, role: Role) -> &RoleCost {
        match role {
            Role::Sensor => &self.sensor,
            Role::Intermediate => &self.intermediate,
            Role::Hub => &self.hub,
        }
    }

    /// TOML-compatible text with fixed field names, one table per role.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for role in Role::ALL {
            let c = self.role(role);
            let _ = writeln!(out, "[{}]", role.label());
            let _ = writeln!(out, "hashCount = {}", c.hash_count);
            let _ = writeln!(out, "xorCount = {}", c.xor_count);
            for (i, bits) in c.bits_sent.0.iter().enumerate() {
                let _ = writeln!(out, "bitsSent.hop{} = {}", i + 1, bits);
            }
            let _ = writeln!(out, "storageBits = {}", c.storage_bits);
            let _ = writeln!(out, "timeMs = {}", format_real(c.time_ms));
            let _ = writeln!(out, "energyMJ = {}", format_real(c.energy_mj));
            out.push('\n');
        }
        out.push_str("[bandwidth]\n");
        for (i, bits) in self.bandwidth.0.iter().enumerate() {
            let _ = writeln!(out, "hop{} = {}", i + 1, bits);
        }
        out
    }
}
