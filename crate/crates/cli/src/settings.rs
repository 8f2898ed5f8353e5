//! Config-file merging and input path resolution.
//!
//! Precedence, highest first: command-line flags, the subcommand's section
//! of the config file (`{"aggregate": {...}}`), top-level config keys,
//! built-in defaults. The config path itself is taken as given; relative
//! input paths inside it go through [`input_path`] like flags do.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::{CmdResult, Failure, ResultExt};

/// Relative input paths are resolved against this directory when set.
pub const DATA_DIR_ENV: &str = "AQ_DATA_DIR";

pub const SUBCOMMANDS: [&str; 9] = ["ingest", "aggregate", "iaa", "features", "train", "predict", "evaluate", "experiment", "demo"];

#[derive(Debug, Default)]
pub struct Config {
    root: Map<String, Value>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CmdResult<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(root)) => Ok(Config { root }),
            Ok(_) => Err(Failure::usage(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(Failure::usage(format!("{}: {e}", path.display()))),
        }
    }

    /// Overlays `flags` (unset options are skipped when serialised) on the
    /// config values for `section`.
    pub fn resolve<A: Serialize + DeserializeOwned>(&self, section: &str, flags: &A) -> CmdResult<A> {
        let mut merged: Map<String, Value> = self
            .root
            .iter()
            .filter(|(k, _)| !SUBCOMMANDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(Value::Object(sec)) = self.root.get(section) {
            merged.extend(sec.clone());
        }
        if let Value::Object(f) = serde_json::to_value(flags).usage()? {
            merged.extend(f);
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::usage(format!("config for `{section}`: {e}")))
    }
}

pub fn input_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn required<T>(value: Option<T>, flag: &str) -> CmdResult<T> {
    value.ok_or_else(|| Failure::usage(format!("missing required option --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        method: Option<String>,
    }

    #[test]
    fn flags_beat_section_beats_top_level() {
        let cfg = Config {
            root: serde_json::from_str(r#"{"seed": 1, "method": "mix", "aggregate": {"seed": 2}}"#).unwrap(),
        };
        let got = cfg.resolve("aggregate", &Flags::default()).unwrap();
        assert_eq!(got, Flags { seed: Some(2), method: Some("mix".into()) });
        let got = cfg.resolve("aggregate", &Flags { seed: Some(3), method: None }).unwrap();
        assert_eq!(got.seed, Some(3));
        assert_eq!(cfg.resolve("iaa", &Flags::default()).unwrap().seed, Some(1));
    }
}
