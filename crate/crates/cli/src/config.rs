//! Loading, overriding and hashing the run configuration.
//!
//! Files are TOML with one table per stage, or a JSON run record whose
//! `config` field is reused. Values are merged onto the built-in defaults
//! key by key, so a partial `[channel]` table keeps the other defaults.

use std::path::Path;

use cvqkd::pipeline::LinkConfig;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // A run record carries its resolved config under `config`.
        if v.get("config_hash").is_some() {
            if let Some(inner) = v.get_mut("config") {
                return Ok(inner.take());
            }
        }
        Ok(v)
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Parse the right-hand side of `--set key=value` as a TOML literal.
///
/// `null` clears an optional key. Anything that is not valid TOML is taken
/// as a bare string.
fn parse_literal(raw: &str) -> Value {
    if raw == "null" {
        return Value::Null;
    }
    match toml::from_str::<Map<String, Value>>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let mut node = root;
    for part in &path[..path.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("`{key}` descends into a value")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("`{key}` descends into a value")))?;
    obj.insert(path[path.len() - 1].to_string(), parse_literal(raw.trim()));
    Ok(())
}

/// Build the resolved configuration from an optional file and `key=value` overrides.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<LinkConfig, CliError> {
    let mut user = match file {
        Some(p) => read_file(p)?,
        None => Value::Object(Map::new()),
    };
    for o in overrides {
        apply_override(&mut user, o)?;
    }
    let mut merged = serde_json::to_value(LinkConfig::default()).expect("default config serializes");
    merge(&mut merged, user);
    let mut cfg: LinkConfig = serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 of the canonical JSON form, as lowercase hex.
pub fn config_hash(cfg: &LinkConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolved config as a TOML document; unset optional keys are omitted.
pub fn to_toml(cfg: &LinkConfig) -> String {
    toml::to_string_pretty(cfg).expect("config is representable in TOML")
}
