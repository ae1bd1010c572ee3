//! Lightweight mutual authenticated key agreement for two-tier body sensor
//! networks.
//!
//! A sensor node (SN) authenticates to a hub node (HN) through an
//! intermediate node (IN) using only SHA-1 and XOR, and both ends derive a
//! fresh 160-bit session key. The crate provides:
//!
//! - [`primitives`]: bit strings, hashing, nonces and the simulated clock
//! - [`wire`]: bit-exact codecs for the four handshake frames
//! - [`registry`]: hub initialization, node registration, deployment files
//! - [`nodes`]: the three protocol roles
//! - [`simnet`]: a deterministic event-driven channel with a scripted
//!   Dolev-Yao adversary
//! - [`metrics`]: operation counts, bandwidth, storage, time and energy
//! - [`cli`]: the `bsn-aka` command-line front end

pub mod cli;
pub mod metrics;
pub mod nodes;
pub mod primitives;
pub mod registry;
pub mod simnet;
pub mod wire;

pub use nodes::{FreshnessPolicy, ProtocolError, SessionKey};
pub use primitives::{BitString, Timestamp};
pub use registry::{Deployment, HubState, SensorCredentials};
pub use simnet::{AdversaryAction, AdversaryScript, SessionOutcome, World};
