//! IO, inference and experiment orchestration around `impactloc-core`.

pub mod cache;
pub mod config;
pub mod inference;
pub mod instructions;
pub mod io;
pub mod report;
pub mod runner;

pub use impactloc_core as core;

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
