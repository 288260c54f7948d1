use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use eigensep_core::specnet::FORMAT_VERSION;
use eigensep_core::{Error, Result};

/// Record of one command invocation, written next to its main output.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds per named phase.
    pub timings: BTreeMap<String, f64>,
    pub results: BTreeMap<String, serde_json::Value>,
    pub created_unix_secs: u64,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("eigensep".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("model_format".into(), FORMAT_VERSION.to_string());
        Manifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            seed,
            config,
            versions,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            results: BTreeMap::new(),
            created_unix_secs: 0,
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Runs `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.insert(phase.into(), start.elapsed().as_secs_f64());
        Ok(out)
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.results.insert(key.into(), v);
    }

    /// Writes `<primary>.manifest.json`.
    pub fn write(mut self, primary: &Path) -> Result<PathBuf> {
        self.created_unix_secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        write_json(&path, &self)?;
        Ok(path)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
