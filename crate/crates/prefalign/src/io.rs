//! Shared helpers for the on-disk formats.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with sorted keys, wrapped in a versioned envelope.
pub fn canonical_json<T: Serialize>(kind: &str, version: u32, config_hash: &str, data: &T) -> Result<String> {
    envelope(kind, version, config_hash, data, true)
}

/// As [`canonical_json`] without whitespace, for bulky numeric payloads.
pub fn canonical_json_compact<T: Serialize>(kind: &str, version: u32, config_hash: &str, data: &T) -> Result<String> {
    envelope(kind, version, config_hash, data, false)
}

fn envelope<T: Serialize>(kind: &str, version: u32, config_hash: &str, data: &T, pretty: bool) -> Result<String> {
    let data = serde_json::to_value(data).map_err(|e| Error::Invalid(e.to_string()))?;
    let doc = json!({
        "kind": kind,
        "schema_version": version,
        "config_hash": config_hash,
        "data": data,
    });
    let mut s = if pretty {
        serde_json::to_string_pretty(&doc)
    } else {
        serde_json::to_string(&doc)
    }
    .map_err(|e| Error::Invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Inverse of [`canonical_json`]; returns the payload and config hash.
pub fn read_canonical_json<T: DeserializeOwned>(path: &Path, kind: &str, version: u32) -> Result<(T, String)> {
    let bytes = read_file(path)?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))?;
    let found_kind = doc.get("kind").and_then(Value::as_str);
    if found_kind != Some(kind) {
        return Err(Error::format(path, format!("expected a {kind} file, found {found_kind:?}")));
    }
    let found = doc
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::format(path, "missing schema_version"))?;
    if found != u64::from(version) {
        return Err(Error::SchemaVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: version,
        });
    }
    let hash = doc.get("config_hash").and_then(Value::as_str).unwrap_or_default().to_string();
    let data = doc.get("data").cloned().ok_or_else(|| Error::format(path, "missing data"))?;
    let data = serde_json::from_value(data).map_err(|e| Error::format(path, e))?;
    Ok((data, hash))
}
