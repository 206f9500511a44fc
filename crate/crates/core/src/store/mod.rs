//! Content-addressed blob storage and the fingerprint-keyed result cache.
//!
//! Every read verifies the digest of the bytes returned against the hash
//! they are stored under; a mismatch is reported as corruption and the
//! offending entry is dropped, so bad bytes never reach a caller.

mod fs;
mod memory;
pub mod workflow_file;

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::hash::ContentHash;

pub use fs::{FsStore, GcReport, DEFAULT_GC_LIMIT};
pub use memory::MemoryStore;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt entry {key}: stored bytes hash to {actual}")]
    CorruptEntry { key: ContentHash, actual: String },
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub trait BlobStore: Send + Sync {
    /// Stores `bytes` under their digest. Idempotent.
    fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash, StoreError>;

    /// `Ok(None)` when absent; `CorruptEntry` (and the blob is dropped) when
    /// the stored bytes no longer match `hash`.
    fn get_blob(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, StoreError>;

    fn contains_blob(&self, hash: &ContentHash) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheLookup {
    Hit { hash: ContentHash, bytes: Vec<u8> },
    Miss,
    /// The entry or its blob failed verification and was dropped.
    Corrupt { fingerprint: ContentHash },
}

pub trait ResultCache: Send + Sync {
    fn cache_get(&self, fingerprint: &ContentHash) -> CacheLookup;

    /// Records `fingerprint -> hash` and stores `bytes` as the blob for `hash`.
    fn cache_put(&self, fingerprint: &ContentHash, hash: &ContentHash, bytes: &[u8]) -> Result<(), StoreError>;

    /// Forgets every fingerprint; blobs are kept.
    fn clear_cache(&self) -> Result<(), StoreError>;
}

pub trait Store: BlobStore + ResultCache {}

impl<T: BlobStore + ResultCache> Store for T {}

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| StoreError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

fn verify(hash: &ContentHash, bytes: &[u8]) -> Result<(), StoreError> {
    let actual = ContentHash::of(bytes);
    if actual == *hash {
        Ok(())
    } else {
        Err(StoreError::CorruptEntry {
            key: *hash,
            actual: actual.to_hex(),
        })
    }
}
