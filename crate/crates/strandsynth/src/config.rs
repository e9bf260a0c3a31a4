//! Configuration I/O: TOML files on disk, plus content hashing used to
//! fingerprint configs and rendered payloads.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Loads any deserializable value from a TOML file.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Saves any serializable value as pretty TOML.
pub fn save_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_toml_string(value)?)?;
    Ok(())
}

/// Renders a serializable value as pretty TOML text.
pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Stable fingerprint of a serializable value: SHA-256 over its JSON form.
/// Struct fields serialize in declaration order, so equal values hash equal.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(sha256_hex(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vectors() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_hash_is_stable_and_value_sensitive() {
        let a = crate::params::StringParams::default();
        let mut b = a;
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.gamma += 1.0;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
