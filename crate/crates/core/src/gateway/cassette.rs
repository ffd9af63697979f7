use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse};
use crate::error::GatewayError;

/// One recorded exchange; the cassette file is JSONL of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Recorded request → response store. Entries are never replaced: the
/// first recording of a fingerprint wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts empty when `create` is set and the file is absent.
    pub fn open(path: &Path, create: bool) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Cassette { path: path.to_path_buf(), message };
        let mut cassette = Cassette { entries: BTreeMap::new(), path: Some(path.to_path_buf()) };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && create => return Ok(cassette),
            Err(e) => return Err(err(e.to_string())),
        };
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
            cassette.entries.entry(entry.fingerprint.clone()).or_insert(entry);
        }
        Ok(cassette)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<&ChatResponse> {
        self.get(&request.fingerprint()).map(|e| &e.response)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }

    /// Inserts in memory and, when file-backed, appends one JSONL line.
    /// Returns false if the fingerprint was already recorded.
    pub fn append(&mut self, request: ChatRequest, response: ChatResponse) -> Result<bool, GatewayError> {
        let fingerprint = request.fingerprint();
        if self.entries.contains_key(&fingerprint) {
            return Ok(false);
        }
        let entry = CassetteEntry { fingerprint: fingerprint.clone(), request, response };
        if let Some(path) = &self.path {
            let err = |message: String| GatewayError::Cassette { path: path.clone(), message };
            let line = serde_json::to_string(&entry).map_err(|e| err(e.to_string()))?;
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| err(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| err(e.to_string()))?;
        }
        self.entries.insert(fingerprint, entry);
        Ok(true)
    }

    /// Writes every entry to `path`, ordered by fingerprint.
    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).map_err(std::io::Error::other)?);
            out.push('\n');
        }
        std::fs::write(path, out)
    }
}
