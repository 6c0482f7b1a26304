//! Append-only JSONL records with a schema version on every line, and run
//! manifests.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::BackendKind;

pub const SCHEMA_VERSION: u32 = 1;

/// A type stored one per line.
pub trait Record: Serialize + DeserializeOwned {
    const RECORD_TYPE: &'static str;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    record_type: &'a str,
    record: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema_version: u32,
    record_type: String,
    record: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: corrupt record: {message}")]
    Corrupt { line: usize, message: String },
    #[error("line {line}: schema version {found}, expected {expected}")]
    SchemaVersionMismatch { line: usize, expected: u32, found: u32 },
    #[error("line {line}: record type `{found}`, expected `{expected}`")]
    WrongRecordType { line: usize, expected: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// One envelope line, without the trailing newline.
pub fn encode_line<T: Record>(record: &T) -> String {
    serde_json::to_string(&EnvelopeOut { schema_version: SCHEMA_VERSION, record_type: T::RECORD_TYPE, record })
        .expect("records serialize")
}

pub fn to_jsonl<T: Record>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&encode_line(r));
        out.push('\n');
    }
    out
}

/// Replaces `path` with `records`.
pub fn write_jsonl<T: Record>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    std::fs::write(path, to_jsonl(records)).map_err(io_err(path))
}

/// Serialized appends to one file.
pub struct JsonlAppender {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl JsonlAppender {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        Ok(JsonlAppender { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn append<T: Record>(&mut self, record: &T) -> Result<(), StoreError> {
        let line = encode_line(record);
        writeln!(self.out, "{line}").map_err(io_err(&self.path))
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

pub fn parse_jsonl<T: Record>(text: &str) -> Result<Vec<T>, StoreError> {
    parse_lines(text.lines().map(|l| Ok::<_, StoreError>(l.to_string())))
}

fn parse_lines<T: Record, I>(lines: I) -> Result<Vec<T>, StoreError>
where
    I: Iterator<Item = Result<String, StoreError>>,
{
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let env: EnvelopeIn = serde_json::from_str(&line)
            .map_err(|e| StoreError::Corrupt { line: line_no, message: e.to_string() })?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                line: line_no,
                expected: SCHEMA_VERSION,
                found: env.schema_version,
            });
        }
        if env.record_type != T::RECORD_TYPE {
            return Err(StoreError::WrongRecordType {
                line: line_no,
                expected: T::RECORD_TYPE.to_string(),
                found: env.record_type,
            });
        }
        let rec = serde_json::from_value(env.record)
            .map_err(|e| StoreError::Corrupt { line: line_no, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl<T: Record>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let lines = BufReader::new(file).lines().map(|l| l.map_err(io_err(path)));
    parse_lines(lines)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, StoreError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Everything needed to re-execute a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub timestamp: String,
    pub command: String,
    pub config: serde_json::Value,
    pub catalog_hash: String,
    #[serde(default)]
    pub dataset_hash: Option<String>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub backend: Option<BackendKind>,
    #[serde(default)]
    pub fixtures_dir: Option<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, catalog_hash: String, seeds: Vec<u64>) -> Self {
        RunManifest {
            run_id: uuid::Uuid::new_v4().to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.to_string(),
            config,
            catalog_hash,
            dataset_hash: None,
            seeds,
            backend: None,
            fixtures_dir: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), StoreError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { line: 1, message: e.to_string() })
    }
}
