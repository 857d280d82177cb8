//! Stable hashing helpers shared by state digests, seed derivation and
//! serialization fingerprints.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`, truncated to 16 hex characters.
pub fn short_hash(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    hex::encode(&full[..8])
}

/// Full hex-encoded SHA-256 of `bytes`.
pub fn full_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First eight bytes of SHA-256 of `text`, little endian.
pub fn hash64(text: &str) -> u64 {
    let full = Sha256::digest(text.as_bytes());
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&full[..8]);
    u64::from_le_bytes(buf)
}

/// Serializes `value` as pretty JSON with object keys in sorted order.
///
/// Going through `serde_json::Value` sorts every map, so struct field order
/// never leaks into the output.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&tree)?;
    text.push('\n');
    Ok(text)
}

/// Single-line canonical JSON, used for line-delimited records.
pub fn canonical_line<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    serde_json::to_string(&tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_hash_is_sixteen_hex_chars() {
        let h = short_hash(b"west_of_house");
        assert_eq!(h.len(), 16);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(serde::Serialize)]
        struct Unsorted {
            zeta: u8,
            alpha: u8,
        }
        let text = canonical_line(&Unsorted { zeta: 1, alpha: 2 }).unwrap();
        assert_eq!(text, r#"{"alpha":2,"zeta":1}"#);
    }
}
