//! Labelled sub-seed derivation from a single master seed.

use sha2::{Digest, Sha256};

/// Derive an independent 64-bit seed for the component named `label`.
///
/// The same `(master, label)` pair always yields the same seed, and distinct
/// labels give unrelated streams, so each component can be reproduced on its
/// own.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub const WORKLOAD: &str = "workload";
pub const AGENT_INIT: &str = "agent-init";
pub const EPSILON: &str = "epsilon";
pub const REPLAY: &str = "replay";
pub const POLICY: &str = "policy";
