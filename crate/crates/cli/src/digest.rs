//! Content hashes that link artifacts into a checkable chain.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "reid";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON encoding of `value`.
pub fn sha256_json<T: Serialize>(value: &T) -> String {
    sha256_bytes(&serde_json::to_vec(value).expect("serializable value"))
}
