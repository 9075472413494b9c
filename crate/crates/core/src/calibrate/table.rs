//! On-disk cache of calibrations: one JSON file per key, named by a hash of
//! the key, holding the key verbatim, the thresholds and a checksum.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CalibrationKind, CriticalValueVector, Model};
use crate::error::{Error, Result};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableKey {
    pub kind: CalibrationKind,
    pub model: Model,
    pub n: usize,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub collection_hash: String,
}

impl TableKey {
    /// File stem: hex SHA-256 of the canonical key tuple.
    pub fn id(&self) -> String {
        let canonical = format!(
            "{}|{}|{}|{:?}|{}|{}|{}",
            self.kind, self.model, self.n, self.alpha, self.reps, self.seed, self.collection_hash
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub schema_version: u32,
    pub key: TableKey,
    pub vector: CriticalValueVector,
    pub checksum: String,
}

fn checksum(key: &TableKey, vector: &CriticalValueVector) -> Result<String> {
    let payload = serde_json::to_vec(&(key, vector))?;
    Ok(hex::encode(Sha256::digest(&payload)))
}

impl TableEntry {
    pub fn new(key: TableKey, vector: CriticalValueVector) -> Result<Self> {
        let checksum = checksum(&key, &vector)?;
        Ok(Self { schema_version: TABLE_SCHEMA_VERSION, key, vector, checksum })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Parses and verifies a stored entry.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let entry: TableEntry = serde_json::from_slice(bytes)?;
        if entry.schema_version != TABLE_SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "unsupported table schema version {}",
                entry.schema_version
            )));
        }
        if checksum(&entry.key, &entry.vector)? != entry.checksum {
            return Err(Error::ChecksumMismatch(entry.key.id()));
        }
        Ok(entry)
    }
}

/// How `get_or_build` produced its result.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Hit,
    Built,
    /// The stored entry was unreadable or failed its checksum.
    Rebuilt(String),
    /// Computed but could not be persisted.
    Unsaved(String),
}

#[derive(Debug, Clone)]
pub struct CalibrationTable {
    dir: PathBuf,
}

impl CalibrationTable {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &TableKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.id()))
    }

    pub fn get(&self, key: &TableKey) -> Result<Option<CriticalValueVector>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let entry = TableEntry::decode(&bytes).map_err(|e| match e {
            Error::Decode(_) => Error::ChecksumMismatch(path.display().to_string()),
            other => other,
        })?;
        if entry.key != *key {
            return Err(Error::ChecksumMismatch(format!("{}: key mismatch", path.display())));
        }
        Ok(Some(entry.vector))
    }

    /// Writes atomically: temp file in the table directory, then rename.
    pub fn put(&self, key: &TableKey, vector: &CriticalValueVector) -> Result<PathBuf> {
        let entry = TableEntry::new(key.clone(), vector.clone())?;
        let path = self.path_for(key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&entry.encode()?)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| Error::Storage(e.error))?;
        Ok(path)
    }

    pub fn get_or_build(
        &self,
        key: &TableKey,
        build: impl FnOnce() -> Result<CriticalValueVector>,
    ) -> Result<(CriticalValueVector, Lookup)> {
        let mut status = Lookup::Built;
        match self.get(key) {
            Ok(Some(v)) => return Ok((v, Lookup::Hit)),
            Ok(None) => {}
            Err(e @ (Error::ChecksumMismatch(_) | Error::Configuration(_))) => {
                status = Lookup::Rebuilt(e.to_string());
            }
            Err(e) => return Err(e),
        }
        let vector = build()?;
        if let Err(e) = self.put(key, &vector) {
            status = Lookup::Unsaved(e.to_string());
        }
        Ok((vector, status))
    }
}
