//! Deterministic report files: stable key order, numbers at 12 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Number, Value};
use wsobolev::grid::fmt12;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Writes report files into one output directory.
pub struct Emitter {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

/// Rounds every float in `v` to 12 significant digits.
pub fn round12(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = fmt12(x).parse().expect("fmt12 output parses");
            Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round12).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round12(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::field("report", e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&round12(v)).expect("values serialize");
    s.push('\n');
    Ok(s)
}

impl Emitter {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// `<stem>.json`, whatever the format.
    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<(), CliError> {
        let text = to_json(value)?;
        self.raw(&format!("{stem}.json"), text.as_bytes())
    }

    /// `<stem>.csv` or `<stem>.json` according to the format.
    pub fn table<T: Serialize>(&mut self, stem: &str, value: &T, csv: String) -> Result<(), CliError> {
        match self.format {
            Format::Csv => self.raw(&format!("{stem}.csv"), csv.as_bytes()),
            Format::Json => self.json(stem, value),
        }
    }
}
