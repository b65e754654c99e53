//! Metadata headers and JSON envelopes shared by every file the pipeline writes.
//!
//! CSV and text artifacts start with one `# {json}` comment line; JSON
//! artifacts are `{"meta": ..., "data": ...}` objects. The metadata carries
//! the producing step and its effective parameters.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOL: &str = "eegconn";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub format: u32,
    pub step: String,
    pub params: serde_json::Value,
}

impl Meta {
    pub fn new(step: &str, params: &impl Serialize) -> Self {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            format: FORMAT_VERSION,
            step: step.into(),
            params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
        }
    }

    pub fn comment_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("meta serializes"))
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    meta: &'a Meta,
    data: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    #[allow(dead_code)]
    meta: Meta,
    data: T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, data: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&EnvelopeRef { meta, data })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<T> = serde_json::from_str(&text)?;
    Ok(env.data)
}

/// A CSV writer whose file already holds the metadata comment line.
pub fn csv_writer(path: &Path, meta: &Meta) -> Result<csv::Writer<fs::File>> {
    use std::io::Write;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", meta.comment_line()).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Plain text: metadata comment, then one item per line.
pub fn write_lines(path: &Path, meta: &Meta, lines: &[String]) -> Result<()> {
    let mut text = meta.comment_line();
    text.push('\n');
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines of a text artifact.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}
