//! Local event-sourced persistence.
//!
//! `events.log` is a sequence of records `[len: u32 LE][crc32: u32 LE][json]`.
//! Recovery keeps the longest valid prefix and truncates anything after it,
//! which discards a record torn by a crash mid-write. Blobs live under
//! `blobs/<sha256 hex>` and are verified against their name when read.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::session::{EventRecord, Session, SessionError};

const HEADER: usize = 8;
/// Upper bound on one encoded record; larger lengths are treated as damage.
const MAX_RECORD: usize = 16 << 20;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("blob {0} not found")]
    MissingBlob(String),
    #[error("blob {expected} is corrupt: content hashes to {actual}")]
    Integrity { expected: String, actual: String },
    #[error("{0:?} is not a sha256 digest")]
    BadDigest(String),
    #[error("session {id}: {source}")]
    Replay { id: String, source: SessionError },
    #[error("record encoding: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub session_id: String,
    pub record: EventRecord,
}

pub fn encode_record(r: &StoredRecord) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(r)?;
    let mut out = Vec::with_capacity(HEADER + json.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&json).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

/// Decodes the longest valid prefix of a log. Returns the records and the
/// byte length of that prefix.
pub fn decode_log(bytes: &[u8]) -> (Vec<StoredRecord>, usize) {
    let mut records = Vec::new();
    let mut pos = 0;
    while bytes.len() - pos >= HEADER {
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().expect("4 bytes"));
        let start = pos + HEADER;
        if len > MAX_RECORD || bytes.len() - start < len {
            break;
        }
        let payload = &bytes[start..start + len];
        if crc32fast::hash(payload) != crc {
            break;
        }
        let Ok(record) = serde_json::from_slice(payload) else {
            break;
        };
        records.push(record);
        pos = start + len;
    }
    (records, pos)
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

pub fn digest_of(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What [`Store::open`] found on disk.
#[derive(Debug, Default)]
pub struct Recovery {
    /// Sessions rebuilt by replay, keyed by id.
    pub sessions: BTreeMap<String, Session>,
    pub records: usize,
    /// Bytes dropped from the end of the log.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    log_path: PathBuf,
    log: File,
}

impl Store {
    /// Opens or creates a store under `dir`, truncates any torn tail and
    /// replays every session.
    pub fn open(dir: &Path) -> Result<(Self, Recovery)> {
        let blobs = dir.join("blobs");
        fs::create_dir_all(&blobs).map_err(io_err(&blobs))?;
        let log_path = dir.join("events.log");
        let bytes = match fs::read(&log_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let (records, valid) = decode_log(&bytes);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let truncated_bytes = (bytes.len() - valid) as u64;
        if truncated_bytes > 0 {
            log.set_len(valid as u64).map_err(io_err(&log_path))?;
        }

        let mut grouped: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
        let count = records.len();
        for r in records {
            grouped.entry(r.session_id).or_default().push(r.record);
        }
        let sessions = grouped
            .into_iter()
            .map(|(id, recs)| {
                let s = Session::replay(id.clone(), &recs)
                    .map_err(|source| StoreError::Replay { id: id.clone(), source })?;
                Ok((id, s))
            })
            .collect::<Result<_>>()?;
        let store = Self {
            dir: dir.to_path_buf(),
            log_path,
            log,
        };
        Ok((
            store,
            Recovery {
                sessions,
                records: count,
                truncated_bytes,
            },
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one record and flushes it to the OS.
    pub fn append(&mut self, record: &StoredRecord) -> Result<()> {
        let bytes = encode_record(record)?;
        self.log.write_all(&bytes).map_err(io_err(&self.log_path))?;
        self.log.flush().map_err(io_err(&self.log_path))
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        self.dir.join("blobs").join(digest)
    }

    /// Stores `bytes` under their digest; storing the same content twice is
    /// a no-op.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        let digest = digest_of(bytes);
        let path = self.blob_path(&digest);
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        Ok(digest)
    }

    pub fn get_blob(&self, digest: &str) -> Result<Vec<u8>> {
        if !is_digest(digest) {
            return Err(StoreError::BadDigest(digest.to_string()));
        }
        let path = self.blob_path(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::MissingBlob(digest.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let actual = digest_of(&bytes);
        if actual != digest {
            return Err(StoreError::Integrity {
                expected: digest.to_string(),
                actual,
            });
        }
        Ok(bytes)
    }
}
