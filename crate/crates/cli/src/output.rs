//! Tables, atomic writes and the run manifest.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits, so every f64 survives a text round trip.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) => float_json(*v),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

/// Non-finite floats become null.
pub fn float_json(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    /// Array of row objects keyed by column name.
    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    m.insert(c.clone(), v.json());
                }
                Value::Object(m)
            })
            .collect();
        json_bytes(&Value::Array(rows))
    }
}

pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

/// One output file of a run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub master_seed: u64,
    /// SHA-256 of the config echo.
    pub config_sha256: String,
    pub config: Value,
    pub outputs: Vec<OutputRecord>,
    pub timings: Vec<Timing>,
}

/// Write `bytes` to `dir/name` through a temporary file in the same
/// directory.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(tmp.display(), e))?;
    f.write_all(bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    f.sync_all().map_err(|e| CliError::io(tmp.display(), e))?;
    drop(f);
    fs::rename(&tmp, &target).map_err(|e| CliError::io(target.display(), e))?;
    Ok(target)
}

/// Re-read `dir/name` and compare its digest with `expected`.
pub fn verify(dir: &Path, name: &str, expected: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| CliError::io(path.display(), e))?;
    let got = sha256_hex(&bytes);
    if got != expected {
        return Err(CliError::Io(format!("{}: checksum {got} does not match written {expected}", path.display())));
    }
    Ok(())
}

/// Write the artifacts and the config echo, verify them, then write the
/// manifest last.
pub fn write_run(
    dir: &Path,
    experiment: &str,
    master_seed: u64,
    config_json: &str,
    artifacts: &[Artifact],
    timings: Vec<Timing>,
) -> Result<RunManifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut outputs = Vec::with_capacity(artifacts.len() + 1);
    let echo = Artifact::new(CONFIG_ECHO, config_json.as_bytes().to_vec());
    for a in std::iter::once(&echo).chain(artifacts) {
        if a.name == MANIFEST || a.name.contains('/') || a.name.starts_with('.') {
            return Err(CliError::Io(format!("refusing to write output named {}", a.name)));
        }
        write_atomic(dir, &a.name, &a.bytes)?;
        outputs.push(OutputRecord { file: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() as u64 });
    }
    for o in &outputs {
        verify(dir, &o.file, &o.sha256)?;
    }
    let manifest = RunManifest {
        tool: "oss".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: experiment.into(),
        master_seed,
        config_sha256: sha256_hex(config_json.as_bytes()),
        config: serde_json::from_str(config_json).map_err(|e| CliError::Config(e.to_string()))?,
        outputs,
        timings,
    };
    let bytes = json_bytes(&manifest);
    write_atomic(dir, MANIFEST, &bytes)?;
    verify(dir, MANIFEST, &sha256_hex(&bytes))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
