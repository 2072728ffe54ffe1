//! Layering of defaults, the optional TOML config file and command-line flags.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Reads a TOML file. Top-level keys apply to every subcommand; a `[name]` table applies to one.
pub fn load(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn normalize_keys(map: Map<String, Value>) -> Map<String, Value> {
    map.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect()
}

fn file_layer(file: Option<&toml::Table>, section: &str) -> Result<Map<String, Value>> {
    let Some(table) = file else { return Ok(Map::new()) };
    let mut out = Map::new();
    for (k, v) in table {
        if !v.is_table() {
            out.insert(k.clone(), serde_json::to_value(v)?);
        }
    }
    if let Some(toml::Value::Table(sub)) = table.get(section) {
        for (k, v) in sub {
            out.insert(k.clone(), serde_json::to_value(v)?);
        }
    }
    Ok(normalize_keys(out))
}

/// `defaults`, overridden by the config file, overridden by flags given on the command line.
///
/// Returns the merged arguments and their JSON echo.
pub fn resolve<A: Serialize + DeserializeOwned>(
    cli: &A,
    defaults: Value,
    file: Option<&toml::Table>,
    section: &str,
) -> Result<(A, Value)> {
    let mut merged = match defaults {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    merged.extend(file_layer(file, section)?);
    let Value::Object(flags) = serde_json::to_value(cli)? else {
        return Err(anyhow!("flags did not serialize to a map"));
    };
    merged.extend(flags.into_iter().filter(|(_, v)| !v.is_null()));
    let echo = Value::Object(merged);
    let args = serde_json::from_value(echo.clone()).context("invalid configuration value")?;
    Ok((args, echo))
}

/// Unwraps a required setting.
pub fn req<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value.clone().ok_or_else(|| anyhow!("missing required setting --{flag}"))
}
