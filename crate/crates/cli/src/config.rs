//! Layered settings: built-in defaults, then the config file, then flags.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "ORGANMIX_WORKERS";

/// A mistake in how the tool was invoked, as opposed to a failure while running.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// The `[command]` table of a TOML config file, empty without a file.
pub fn file_table(path: Option<&Path>, command: &str) -> anyhow::Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    match table.get(command) {
        None => Ok(Map::new()),
        Some(v) => match serde_json::to_value(v)? {
            Value::Object(m) => Ok(m),
            _ => Err(usage(format!("config {}: [{command}] must be a table", path.display()))),
        },
    }
}

/// Overlays the flags that were given onto `layer`.
pub fn overlay(layer: &mut Map<String, Value>, flags: &impl Serialize) -> anyhow::Result<()> {
    if let Value::Object(m) = serde_json::to_value(flags)? {
        layer.extend(m);
    }
    Ok(())
}

/// Fills `workers` from the environment, then from the core count.
pub fn default_workers(layer: &mut Map<String, Value>) -> anyhow::Result<()> {
    if layer.contains_key("workers") {
        return Ok(());
    }
    let n = match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{WORKERS_ENV}={s:?} is not a positive integer")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    layer.insert("workers".into(), n.into());
    Ok(())
}

pub fn finish<T: DeserializeOwned>(command: &str, layer: Map<String, Value>) -> anyhow::Result<T> {
    serde_json::from_value(Value::Object(layer)).map_err(|e| usage(format!("{command}: {e}")))
}

/// Prints the effective settings; feeding them back reproduces the run.
pub fn print_config(command: &str, config: &impl Serialize) -> anyhow::Result<()> {
    let mut m = Map::new();
    m.insert(command.into(), serde_json::to_value(config)?);
    println!("# config: {}", Value::Object(m));
    Ok(())
}
