//! SHA-256 fingerprints for cache keys and artifact identity.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Digest over length-prefixed parts, so `("ab", "c")` and `("a", "bc")` differ.
pub fn sha256_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn hex_parts(parts: &[&[u8]]) -> String {
    hex::encode(sha256_parts(parts))
}

/// Fingerprint of a value's serialized JSON form. Struct fields serialize in
/// declaration order, so this is stable for a given type.
pub fn json_fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    hex::encode(Sha256::digest(bytes))
}
