//! Administrator-side setup: hub initialization and sensor / intermediate
//! registration, plus the deployment file that makes a setup reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{self, BitString, NonceSource, DIGEST_BITS, INTERMEDIATE_ID_BITS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a sensor with a_N = {0} is already registered")]
    DuplicateSensor(String),
    #[error("intermediate {0} is already registered")]
    DuplicateIntermediate(String),
    #[error("{field} must be {expected} bits, got {got}")]
    Width {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("deployment file: {0}")]
    Parse(String),
}

fn check_width(
    field: &'static str,
    bits: &BitString,
    expected: usize,
) -> Result<(), RegistryError> {
    if bits.width() != expected {
        return Err(RegistryError::Width {
            field,
            expected,
            got: bits.width(),
        });
    }
    Ok(())
}

/// What a sensor node keeps in memory: `<idN, aN, bN>` and the latest
/// session key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorCredentials {
    pub id_n: BitString,
    pub a_n: BitString,
    pub b_n: BitString,
    pub session_key: Option<BitString>,
}

impl SensorCredentials {
    /// Bits of sensor memory, counting the session-key slot.
    pub const STORAGE_BITS: u64 = 4 * DIGEST_BITS as u64;

    pub fn storage_bits(&self) -> u64 {
        Self::STORAGE_BITS
    }
}

/// One row of the hub's lookup table `T(K_Ni, a_Ni)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubEntry {
    pub k_n: BitString,
    pub a_n: BitString,
    pub session_key: Option<BitString>,
}

/// The only thing an intermediate node stores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntermediateState {
    pub id_in: BitString,
}

impl IntermediateState {
    pub fn storage_bits(&self) -> u64 {
        INTERMEDIATE_ID_BITS as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubState {
    k_hn: BitString,
    intermediates: Vec<BitString>,
    table: Vec<HubEntry>,
}

/// Per-entry hub cost: `kN`, `aN` and the session-key slot.
const HUB_ENTRY_BITS: u64 = 3 * DIGEST_BITS as u64;

/// Initialization phase: a hub holding only its master key.
pub fn init_hub(k_hn: BitString) -> HubState {
    assert_eq!(k_hn.width(), DIGEST_BITS, "hub master key width");
    HubState {
        k_hn,
        intermediates: Vec::new(),
        table: Vec::new(),
    }
}

impl HubState {
    pub fn master_key(&self) -> &BitString {
        &self.k_hn
    }

    pub fn table(&self) -> &[HubEntry] {
        &self.table
    }

    pub fn intermediates(&self) -> &[BitString] {
        &self.intermediates
    }

    pub fn knows_intermediate(&self, id_in: &BitString) -> bool {
        self.intermediates.contains(id_in)
    }

    pub(crate) fn store_session_key(&mut self, entry: usize, key: BitString) {
        self.table[entry].session_key = Some(key);
    }

    /// Registers a sensor: computes `aN = h(idN ∥ kN)` and
    /// `bN = kHN ⊕ kN ⊕ idN`, and appends `(kN, aN)` to the table.
    pub fn register_sensor(
        &mut self,
        id_n: BitString,
        k_n: BitString,
    ) -> Result<SensorCredentials, RegistryError> {
        check_width("id_N", &id_n, DIGEST_BITS)?;
        check_width("K_N", &k_n, DIGEST_BITS)?;
        let a_n = primitives::hash(&primitives::concat(&id_n, &k_n));
        let b_n =
            primitives::xor(&primitives::xor(&self.k_hn, &k_n).expect("160"), &id_n).expect("160");
        self.enroll(k_n, a_n.clone())?;
        Ok(SensorCredentials {
            id_n,
            a_n,
            b_n,
            session_key: None,
        })
    }

    /// Appends a raw `(kN, aN)` row. [`HubState::register_sensor`] is the
    /// normal path; this exists for synthetic credential sets.
    pub fn enroll(&mut self, k_n: BitString, a_n: BitString) -> Result<usize, RegistryError> {
        check_width("K_N", &k_n, DIGEST_BITS)?;
        check_width("a_N", &a_n, DIGEST_BITS)?;
        if self.table.iter().any(|e| e.a_n == a_n) {
            return Err(RegistryError::DuplicateSensor(a_n.to_hex()));
        }
        self.table.push(HubEntry {
            k_n,
            a_n,
            session_key: None,
        });
        Ok(self.table.len() - 1)
    }

    pub fn register_intermediate(
        &mut self,
        id_in: BitString,
    ) -> Result<IntermediateState, RegistryError> {
        check_width("id_IN", &id_in, INTERMEDIATE_ID_BITS)?;
        if self.knows_intermediate(&id_in) {
            return Err(RegistryError::DuplicateIntermediate(id_in.to_hex()));
        }
        self.intermediates.push(id_in.clone());
        Ok(IntermediateState { id_in })
    }

    /// `480n + 16m + 160`.
    pub fn storage_bits(&self) -> u64 {
        HUB_ENTRY_BITS * self.table.len() as u64
            + INTERMEDIATE_ID_BITS as u64 * self.intermediates.len() as u64
            + DIGEST_BITS as u64
    }

    /// Serialized `(kN, aN)` pairs in table order. Session keys are excluded:
    /// they are the only thing a protocol run is allowed to write.
    pub fn credential_table_bytes(&self) -> Vec<u8> {
        self.table
            .iter()
            .flat_map(|e| e.k_n.as_bytes().iter().chain(e.a_n.as_bytes()))
            .copied()
            .collect()
    }
}

mod serde_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::primitives::BitString;

    pub fn serialize<S: Serializer>(bits: &BitString, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&bits.to_hex())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BitString, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(text.trim()).map_err(serde::de::Error::custom)?;
        Ok(BitString::from_byte_slice(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorRecord {
    #[serde(with = "serde_hex")]
    pub id: BitString,
    #[serde(with = "serde_hex")]
    pub key: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateRecord {
    #[serde(with = "serde_hex")]
    pub id: BitString,
}

/// Deployment file contents: the administrator's secrets, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    #[serde(with = "serde_hex")]
    pub hub_key: BitString,
    #[serde(default)]
    pub sensors: Vec<SensorRecord>,
    #[serde(default)]
    pub intermediates: Vec<IntermediateRecord>,
}

/// A registered network: the hub plus what each node was provisioned with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provisioned {
    pub hub: HubState,
    pub sensors: Vec<SensorCredentials>,
    pub intermediates: Vec<IntermediateState>,
}

/// Generator stream reserved for key material; sessions draw nonces from
/// streams 0 and 1.
pub const KEYGEN_STREAM: u64 = 0x6b65_7967_656e;

impl Deployment {
    /// Draws every secret from stream [`KEYGEN_STREAM`] of `seed`, apart
    /// from the streams session nonces use. Sensor
    /// identities, derived `aN` values and intermediate IDs are unique by
    /// rejection.
    pub fn generate(sensors: usize, intermediates: usize, seed: u64) -> Self {
        let mut rng = NonceSource::with_stream(seed, KEYGEN_STREAM);
        let hub_key = rng.next_bits(DIGEST_BITS);
        let mut hub = init_hub(hub_key.clone());
        let mut records = Vec::with_capacity(sensors);
        while records.len() < sensors {
            let id = rng.next_bits(DIGEST_BITS);
            let key = rng.next_bits(DIGEST_BITS);
            if records.iter().any(|r: &SensorRecord| r.id == id) {
                continue;
            }
            if hub.register_sensor(id.clone(), key.clone()).is_ok() {
                records.push(SensorRecord { id, key });
            }
        }
        let mut ins = Vec::with_capacity(intermediates);
        while ins.len() < intermediates {
            let id = rng.next_bits(INTERMEDIATE_ID_BITS);
            if hub.register_intermediate(id.clone()).is_ok() {
                ins.push(IntermediateRecord { id });
            }
        }
        Deployment {
            hub_key,
            sensors: records,
            intermediates: ins,
        }
    }

    pub fn provision(&self) -> Result<Provisioned, RegistryError> {
        check_width("hub_key", &self.hub_key, DIGEST_BITS)?;
        let mut hub = init_hub(self.hub_key.clone());
        let sensors = self
            .sensors
            .iter()
            .map(|s| hub.register_sensor(s.id.clone(), s.key.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let intermediates = self
            .intermediates
            .iter()
            .map(|i| hub.register_intermediate(i.id.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Provisioned {
            hub,
            sensors,
            intermediates,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("deployment serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::xor;

    #[test]
    fn key_material_does_not_overlap_session_nonces() {
        for seed in 0..50 {
            let d = Deployment::generate(2, 1, seed);
            for stream in [0, 1] {
                let nonce = NonceSource::with_stream(seed, stream).next_nonce();
                assert_ne!(nonce.bits(), &d.hub_key);
                assert!(d
                    .sensors
                    .iter()
                    .all(|s| &s.key != nonce.bits() && &s.id != nonce.bits()));
            }
        }
    }

    fn bits(seed: u64, width: usize) -> BitString {
        NonceSource::from_seed(seed).next_bits(width)
    }

    #[test]
    fn empty_hub_storage() {
        let hub = init_hub(BitString::zeros(160));
        assert_eq!(hub.storage_bits(), 160);
        assert!(hub.table().is_empty());
        assert_eq!(init_hub(BitString::zeros(160)), hub);
    }

    #[test]
    fn storage_three_sensors_one_intermediate() {
        let mut hub = init_hub(bits(1, 160));
        for s in 0..3 {
            hub.register_sensor(bits(10 + s, 160), bits(20 + s, 160))
                .unwrap();
        }
        hub.register_intermediate(BitString::from_u16(1)).unwrap();
        assert_eq!(hub.storage_bits(), 160 + 1440 + 16);
    }

    #[test]
    fn intermediates_add_sixteen_bits_each() {
        let mut hub = init_hub(bits(1, 160));
        let base = hub.storage_bits();
        for m in 1..=5u16 {
            let st = hub.register_intermediate(BitString::from_u16(m)).unwrap();
            assert_eq!(st.storage_bits(), 16);
            assert_eq!(hub.storage_bits(), base + 16 * m as u64);
        }
    }

    #[test]
    fn duplicate_intermediate_rejected() {
        let mut hub = init_hub(bits(1, 160));
        hub.register_intermediate(BitString::from_u16(1)).unwrap();
        assert!(hub.knows_intermediate(&BitString::from_u16(1)));
        assert_eq!(
            hub.register_intermediate(BitString::from_u16(1)),
            Err(RegistryError::DuplicateIntermediate("0001".into()))
        );
    }

    #[test]
    fn duplicate_sensor_rejected() {
        let mut hub = init_hub(bits(1, 160));
        hub.register_sensor(bits(2, 160), bits(3, 160)).unwrap();
        let err = hub.register_sensor(bits(2, 160), bits(3, 160)).unwrap_err();
        assert!(matches!(err, RegistryError::DuplicateSensor(_)));
        assert_eq!(hub.table().len(), 1);
    }

    #[test]
    fn zero_keys_make_b_equal_id() {
        let mut hub = init_hub(BitString::zeros(160));
        let id = bits(5, 160);
        let creds = hub
            .register_sensor(id.clone(), BitString::zeros(160))
            .unwrap();
        assert_eq!(creds.b_n, id);
    }

    #[test]
    fn a_n_matches_independent_digest() {
        // a_N for a seeded fixture, computed with Python hashlib over id ∥ k
        let k_hn = BitString::from_hex(160, "00112233445566778899aabbccddeeff00112233").unwrap();
        let id = BitString::from_hex(160, "0102030405060708090a0b0c0d0e0f1011121314").unwrap();
        let k = BitString::from_hex(160, "a0a1a2a3a4a5a6a7a8a9aaabacadaeafb0b1b2b3").unwrap();
        let mut hub = init_hub(k_hn.clone());
        let creds = hub.register_sensor(id.clone(), k.clone()).unwrap();
        assert_eq!(
            creds.a_n.to_hex(),
            "f6bf65588a34a3a2c16fbd7ae5aa1a23be56c158"
        );
        assert_eq!(hub.table()[0].a_n, creds.a_n);
        assert_eq!(
            xor(&creds.id_n, &creds.b_n).unwrap(),
            xor(&k_hn, &k).unwrap()
        );
    }

    #[test]
    fn registration_identities_hold() {
        let dep = Deployment::generate(6, 2, 77);
        let p = dep.provision().unwrap();
        for (creds, entry) in p.sensors.iter().zip(p.hub.table()) {
            assert_eq!(
                primitives::hash(&primitives::concat(&creds.id_n, &entry.k_n)),
                entry.a_n
            );
            let lhs = xor(&xor(&creds.id_n, &creds.b_n).unwrap(), &entry.k_n).unwrap();
            assert_eq!(&lhs, p.hub.master_key());
            assert_eq!(creds.storage_bits(), 640);
        }
        assert_eq!(p.hub.storage_bits(), 480 * 6 + 16 * 2 + 160);
    }

    #[test]
    fn wrong_width_rejected() {
        let mut hub = init_hub(bits(1, 160));
        assert!(matches!(
            hub.register_sensor(BitString::zeros(128), bits(2, 160)),
            Err(RegistryError::Width { field: "id_N", .. })
        ));
        assert!(matches!(
            hub.register_intermediate(BitString::zeros(8)),
            Err(RegistryError::Width { .. })
        ));
    }

    #[test]
    fn deployment_file_round_trip_and_determinism() {
        let a = Deployment::generate(3, 1, 7);
        let b = Deployment::generate(3, 1, 7);
        assert_eq!(a.to_toml(), b.to_toml());
        assert_eq!(Deployment::from_toml(&a.to_toml()).unwrap(), a);
        assert_ne!(Deployment::generate(3, 1, 8), a);
    }

    #[test]
    fn malformed_deployment() {
        assert!(matches!(
            Deployment::from_toml("hub_key = \"zz\""),
            Err(RegistryError::Parse(_))
        ));
        let short = Deployment::from_toml("hub_key = \"00ff\"").unwrap();
        assert!(matches!(
            short.provision(),
            Err(RegistryError::Width { .. })
        ));
    }
}
