//! Asynchronous distributed key generation stack with a deterministic
//! adversarial network simulator.
//!
//! The crate layers five protocols, each usable on its own and composed into
//! the next:
//!
//! 1. [`rb`]: erasure-coded reliable broadcast (plain and validated),
//! 2. [`gather`]: verifiable gather over validated broadcast,
//! 3. [`pe`]: proposal election with a DKG-backed threshold VRF,
//! 4. [`nwh`]: view-based asynchronous agreement on externally valid values,
//! 5. [`adkg`]: distributed key generation by agreeing on one transcript.
//!
//! [`simnet`] runs any of them under a seeded adversarial scheduler with
//! per-envelope word metering, [`scenario`] describes runs declaratively,
//! [`checks`] turns run logs into property verdicts, and [`stats`] aggregates
//! across seeds.

use serde::{Deserialize, Serialize};
use std::fmt;

pub mod adkg;
pub mod adversary;
pub mod checks;
pub mod crypto;
pub mod field;
pub mod gather;
pub mod msg;
pub mod nwh;
pub mod pe;
pub mod rb;
pub mod scenario;
pub mod simnet;
pub mod stats;
pub mod validity;
pub mod wire;

/// Zero-based party identifier; `n` parties occupy `0..n`.
#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PartyId(pub usize);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
