//! Append-only document journal with periodic snapshots.
//!
//! Each line is `<checksum> <record-json>\n`, where the checksum is the
//! first 16 hex digits of the SHA-256 of the JSON text. A record is written
//! with a single `write` call before the mutation is acknowledged. On load,
//! reading stops at the first line that is incomplete or fails its
//! checksum; that tail (at most the one unacknowledged record) is truncated
//! away before new records are appended.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::document::{Document, Event};
use crate::ids::Timestamp;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// One acknowledged mutation: a batch of events applied atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub at: Timestamp,
    /// Client-supplied idempotency key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSnapshot {
    /// Sequence number of the last record folded into `document`.
    pub seq: u64,
    pub document: Document,
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal io: {0}")]
    Io(#[from] io::Error),
    #[error("journal record {seq} is corrupt: {reason}")]
    Corrupt { seq: u64, reason: String },
    #[error("snapshot is unreadable: {0}")]
    BadSnapshot(String),
    #[error("journal is unusable after a failed write")]
    Poisoned,
    #[error("injected crash")]
    InjectedCrash,
}

fn checksum(json: &str) -> String {
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

pub fn encode_line(rec: &Record) -> String {
    let json = serde_json::to_string(rec).expect("records always serialize");
    format!("{} {json}\n", checksum(&json))
}

/// Parses journal bytes, returning the intact records and the byte length of
/// the intact prefix.
pub fn decode(bytes: &[u8]) -> (Vec<Record>, usize) {
    let mut out = Vec::new();
    let mut good = 0;
    let mut rest = bytes;
    while let Some(nl) = rest.iter().position(|b| *b == b'\n') {
        let line = &rest[..nl];
        let Some(rec) = std::str::from_utf8(line).ok().and_then(|l| {
            let (sum, json) = l.split_once(' ')?;
            if checksum(json) != sum {
                return None;
            }
            serde_json::from_str::<Record>(json).ok()
        }) else {
            break;
        };
        out.push(rec);
        good += nl + 1;
        rest = &rest[nl + 1..];
    }
    (out, good)
}

enum Sink {
    Memory(Vec<u8>),
    File { file: File, path: PathBuf },
}

pub struct Journal {
    sink: Sink,
    /// Length of the journal known to hold only whole records.
    len: u64,
    sync: bool,
    crash_budget: Option<u64>,
    poisoned: bool,
}

impl std::fmt::Debug for Journal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Journal").field("len", &self.len).finish_non_exhaustive()
    }
}

/// Everything needed to rebuild a document from disk.
#[derive(Debug, Default)]
pub struct Loaded {
    pub snapshot: Option<DocumentSnapshot>,
    /// Records after the snapshot (or all records without one).
    pub records: Vec<Record>,
    /// Bytes dropped from a torn or corrupt tail.
    pub discarded_bytes: u64,
}

impl Journal {
    pub fn in_memory() -> Self {
        Self {
            sink: Sink::Memory(Vec::new()),
            len: 0,
            sync: false,
            crash_budget: None,
            poisoned: false,
        }
    }

    /// Opens (creating if needed) the journal in `dir`, truncating any torn
    /// tail, and returns it with the state to replay.
    pub fn open(dir: &Path, sync: bool) -> Result<(Self, Loaded), JournalError> {
        fs::create_dir_all(dir)?;
        let snapshot = read_snapshot(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (records, good) = decode(&bytes);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if good < bytes.len() {
            log::warn!(
                "journal {}: discarding {} bytes of incomplete tail",
                path.display(),
                bytes.len() - good
            );
            file.set_len(good as u64)?;
        }
        let after = snapshot.as_ref().map(|s| s.seq).unwrap_or(0);
        let loaded = Loaded {
            records: records.into_iter().filter(|r| r.seq > after).collect(),
            snapshot,
            discarded_bytes: (bytes.len() - good) as u64,
        };
        Ok((
            Self {
                sink: Sink::File { file, path },
                len: good as u64,
                sync,
                crash_budget: None,
                poisoned: false,
            },
            loaded,
        ))
    }

    /// Fault injection: after `bytes` more bytes the journal writes a
    /// partial record, fails, and refuses all further appends, as if the
    /// process had died mid-write.
    pub fn inject_crash_after(&mut self, bytes: u64) {
        self.crash_budget = Some(bytes);
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn write_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        match &mut self.sink {
            Sink::Memory(buf) => {
                buf.extend_from_slice(bytes);
                Ok(())
            }
            Sink::File { file, .. } => {
                file.write_all(bytes)?;
                if self.sync {
                    file.sync_data()?;
                }
                Ok(())
            }
        }
    }

    pub fn append(&mut self, rec: &Record) -> Result<(), JournalError> {
        if self.poisoned {
            return Err(JournalError::Poisoned);
        }
        let line = encode_line(rec);
        let bytes = line.as_bytes();
        if let Some(budget) = self.crash_budget {
            if (bytes.len() as u64) > budget {
                let _ = self.write_raw(&bytes[..budget as usize]);
                self.poisoned = true;
                return Err(JournalError::InjectedCrash);
            }
            self.crash_budget = Some(budget - bytes.len() as u64);
        }
        if let Err(e) = self.write_raw(bytes) {
            // Roll back a partial write so later records stay readable.
            let rolled_back = match &mut self.sink {
                Sink::File { file, .. } => file.set_len(self.len).is_ok(),
                Sink::Memory(buf) => {
                    buf.truncate(self.len as usize);
                    true
                }
            };
            self.poisoned = !rolled_back;
            return Err(e.into());
        }
        self.len += bytes.len() as u64;
        Ok(())
    }

    /// Raw journal bytes (in-memory journals only).
    pub fn memory_bytes(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(b) => Some(b),
            Sink::File { .. } => None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::File { path, .. } => Some(path),
            Sink::Memory(_) => None,
        }
    }
}

pub fn read_snapshot(dir: &Path) -> Result<Option<DocumentSnapshot>, JournalError> {
    match fs::read(dir.join(SNAPSHOT_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| JournalError::BadSnapshot(e.to_string())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Writes a snapshot atomically (temp file + rename). The journal is kept
/// whole, so a full replay remains possible.
pub fn write_snapshot(dir: &Path, snapshot: &DocumentSnapshot) -> Result<(), JournalError> {
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let bytes = serde_json::to_vec(snapshot).expect("documents always serialize");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

/// Reads every intact record in `dir`, ignoring any snapshot.
pub fn read_all_records(dir: &Path) -> Result<Vec<Record>, JournalError> {
    match fs::read(dir.join(JOURNAL_FILE)) {
        Ok(bytes) => Ok(decode(&bytes).0),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}
