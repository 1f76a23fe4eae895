//! Files on disk: JSON config and manifests, CSV tables, JSON-lines run logs.
//!
//! Every writer goes through [`write_atomic`], so a crashed run never leaves a
//! half-written output behind.

mod runlog;
mod tables;

pub use runlog::{parse_runlog, read_runlog, runlog_to_string, write_runlog};
pub use tables::{
    frequency_csv, fringe_csv, intensity_csv, parse_frequency_csv, parse_intensity_csv, parse_scans_csv, read_frequency_csv,
    read_fringe_csv, read_intensity_csv, read_scans_csv, scans_csv,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CircuitConfig;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Parses a circuit config; missing fields take their defaults.
///
/// Unknown or ill-typed fields are reported by their dotted path, and the
/// result is validated.
pub fn parse_config(text: &str) -> Result<CircuitConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: CircuitConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Config {
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<CircuitConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved invocation, sufficient to rerun the command.
    pub invocation: serde_json::Value,
    pub config: Option<CircuitConfig>,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, invocation: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            invocation,
            config: None,
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn config_defaults_and_round_trip() {
        assert_eq!(parse_config("{}").unwrap(), CircuitConfig::default());
        let mut c = CircuitConfig::default();
        c.mu = 0.2;
        c.stabilizer.step = 0.05;
        assert_eq!(parse_config(&to_json(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn config_errors_name_fields() {
        let field = |text: &str| match parse_config(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(r#"{"mu": "high"}"#), "mu");
        assert_eq!(field(r#"{"colour": 1}"#), "colour");
        assert_eq!(field(r#"{"stabilizer": {"stepp": 1}}"#), "stabilizer.stepp");
        assert_eq!(field(r#"{"stabilizer": {"step": -1}}"#), "stabilizer.step");
        assert_eq!(field(r#"{"epsilon": 1.0}"#), "epsilon");
        assert_eq!(field(r#"{"detector_efficiency": 1.5}"#), "detector_efficiency");
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("simulate", serde_json::json!({"duration": 1.0}));
        m.outputs.push("runlog.jsonl".into());
        m.timings.insert("simulate".into(), 0.25);
        let back: RunManifest = serde_json::from_str(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
