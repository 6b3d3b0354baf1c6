//! Content-addressed blob storage.
//!
//! Blobs are named by the SHA-256 of their bytes. On disk they live under a
//! two-level fan-out (`ab/cd/abcd…`), so writes are idempotent and may run
//! in parallel: writing the same payload twice lands on the same path.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlobHash(String);

impl BlobHash {
    pub fn of(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First `n` hex characters, used in mock captions and file names.
    pub fn prefix(&self, n: usize) -> &str {
        &self.0[..n.min(self.0.len())]
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()))
            .then(|| Self(s.to_owned()))
    }
}

impl fmt::Display for BlobHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BlobError {
    #[error("blob {0} not found")]
    NotFound(BlobHash),
    #[error("blob io: {0}")]
    Io(#[from] io::Error),
}

enum Backend {
    Memory(RwLock<HashMap<BlobHash, Vec<u8>>>),
    Disk(PathBuf),
}

pub struct BlobStore {
    backend: Backend,
}

impl fmt::Debug for BlobStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.backend {
            Backend::Memory(m) => write!(f, "BlobStore(memory, {} blobs)", m.read().len()),
            Backend::Disk(p) => write!(f, "BlobStore({})", p.display()),
        }
    }
}

impl BlobStore {
    pub fn in_memory() -> Self {
        Self {
            backend: Backend::Memory(RwLock::new(HashMap::new())),
        }
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, BlobError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            backend: Backend::Disk(root),
        })
    }

    fn path_for(root: &Path, hash: &BlobHash) -> PathBuf {
        let h = hash.as_str();
        root.join(&h[0..2]).join(&h[2..4]).join(h)
    }

    /// Stores `bytes` and returns their hash. Returns `(hash, newly_written)`.
    pub fn put(&self, bytes: &[u8]) -> Result<(BlobHash, bool), BlobError> {
        let hash = BlobHash::of(bytes);
        match &self.backend {
            Backend::Memory(map) => {
                let mut map = map.write();
                if map.contains_key(&hash) {
                    return Ok((hash, false));
                }
                map.insert(hash.clone(), bytes.to_vec());
                Ok((hash, true))
            }
            Backend::Disk(root) => {
                let path = Self::path_for(root, &hash);
                if path.exists() {
                    return Ok((hash, false));
                }
                let dir = path.parent().expect("fan-out path has a parent");
                fs::create_dir_all(dir)?;
                // Write to a unique temp name then rename so concurrent writers
                // of the same payload never expose a partial file.
                let tmp = dir.join(format!(
                    ".{}.{}.tmp",
                    hash.prefix(16),
                    std::process::id() as u64 ^ tmp_nonce()
                ));
                {
                    let mut f = fs::File::create(&tmp)?;
                    f.write_all(bytes)?;
                    f.sync_all()?;
                }
                fs::rename(&tmp, &path)?;
                Ok((hash, true))
            }
        }
    }

    pub fn get(&self, hash: &BlobHash) -> Result<Vec<u8>, BlobError> {
        match &self.backend {
            Backend::Memory(map) => map
                .read()
                .get(hash)
                .cloned()
                .ok_or_else(|| BlobError::NotFound(hash.clone())),
            Backend::Disk(root) => match fs::read(Self::path_for(root, hash)) {
                Ok(b) => Ok(b),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    Err(BlobError::NotFound(hash.clone()))
                }
                Err(e) => Err(e.into()),
            },
        }
    }

    pub fn contains(&self, hash: &BlobHash) -> bool {
        match &self.backend {
            Backend::Memory(map) => map.read().contains_key(hash),
            Backend::Disk(root) => Self::path_for(root, hash).exists(),
        }
    }

    /// Number of distinct blobs stored.
    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Memory(map) => map.read().len(),
            Backend::Disk(root) => walk_count(root),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn tmp_nonce() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NONCE: AtomicU64 = AtomicU64::new(0);
    NONCE.fetch_add(1, Ordering::Relaxed)
}

fn walk_count(root: &Path) -> usize {
    let mut n = 0;
    let Ok(level1) = fs::read_dir(root) else { return 0 };
    for a in level1.flatten() {
        let Ok(level2) = fs::read_dir(a.path()) else { continue };
        for b in level2.flatten() {
            if let Ok(files) = fs::read_dir(b.path()) {
                n += files
                    .flatten()
                    .filter(|f| !f.file_name().to_string_lossy().starts_with('.'))
                    .count();
            }
        }
    }
    n
}
