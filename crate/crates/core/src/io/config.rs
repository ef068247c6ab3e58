//! Pipeline configuration from a TOML file plus `key=value` overrides.

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

/// Parses an override value as TOML (number, bool, array, ...) and falls
/// back to a plain string, so `mode=two_frame` needs no quotes.
fn parse_value(text: &str) -> Value {
    let text = text.trim();
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Applies one dotted `key=value` override to `table`.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut node = table;
    for p in path {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override key {key:?}: {p} is not a table")))?;
    }
    node.insert(last.to_string(), parse_value(value));
    Ok(())
}

/// Config from TOML text, overrides and an optional seed; validated.
pub fn parse_config(text: &str, overrides: &[String], seed: Option<u64>) -> Result<PipelineConfig> {
    let mut table: Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut config: PipelineConfig = Value::Table(table).try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

/// [`parse_config`] on a file; without a file the defaults are used.
pub fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<PipelineConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config(&text, overrides, seed)
}

/// Canonical TOML text of a config.
pub fn config_to_toml(config: &PipelineConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FrameMode;

    #[test]
    fn overrides_reach_nested_fields() {
        let sets = ["mode=two_frame", "energy.theta1 = 2", "energy.gamma=0.5", "superpixels=64"].map(String::from);
        let c = parse_config("early_exit = 0.0\n[energy]\ntheta2 = 0.25\n", &sets, Some(9)).unwrap();
        assert_eq!(c.mode, FrameMode::TwoFrame);
        assert_eq!(c.energy.theta1, 2.0);
        assert_eq!(c.energy.theta2, 0.25);
        assert_eq!(c.energy.gamma, Some(0.5));
        assert_eq!(c.superpixels, 64);
        assert_eq!(c.early_exit, 0.0);
        assert_eq!(c.seed, 9);
        let d = PipelineConfig::default();
        assert_eq!(c.energy.theta3, d.energy.theta3);
    }

    #[test]
    fn file_round_trip_is_identity() {
        let c = PipelineConfig { superpixels: 33, ..Default::default() };
        assert_eq!(parse_config(&config_to_toml(&c).unwrap(), &[], None).unwrap(), c);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let bad = |text: &str, sets: &[&str]| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            matches!(parse_config(text, &sets, None), Err(Error::Config(_)))
        };
        assert!(bad("superpixel = 3", &[]));
        assert!(bad("", &["nokey"]));
        assert!(bad("", &["mode=four_frame"]));
        assert!(bad("", &["superpixels=0"]));
        assert!(bad("", &["superpixels.x=1"]));
        assert!(bad("", &["energy.theta9=1"]));
        assert!(bad("[[", &[]));
        assert!(matches!(load_config(Some(Path::new("/nonexistent/c.toml")), &[], None), Err(Error::Config(_))));
    }
}
