use std::collections::HashMap;
use std::sync::RwLock;

use super::{verify, BlobStore, CacheLookup, ResultCache, StoreError};
use crate::hash::ContentHash;

/// In-process store, used by tests and short-lived CLI runs.
#[derive(Debug, Default)]
pub struct MemoryStore {
    blobs: RwLock<HashMap<ContentHash, Vec<u8>>>,
    cache: RwLock<HashMap<ContentHash, ContentHash>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.read().unwrap().len()
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Overwrites the bytes stored under `hash` without rehashing. Only
    /// meaningful for fault-injection tests.
    pub fn tamper_blob(&self, hash: &ContentHash, bytes: Vec<u8>) {
        self.blobs.write().unwrap().insert(*hash, bytes);
    }
}

impl BlobStore for MemoryStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash, StoreError> {
        let hash = ContentHash::of(bytes);
        self.blobs.write().unwrap().entry(hash).or_insert_with(|| bytes.to_vec());
        Ok(hash)
    }

    fn get_blob(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, StoreError> {
        let Some(bytes) = self.blobs.read().unwrap().get(hash).cloned() else {
            return Ok(None);
        };
        if let Err(e) = verify(hash, &bytes) {
            self.blobs.write().unwrap().remove(hash);
            return Err(e);
        }
        Ok(Some(bytes))
    }

    fn contains_blob(&self, hash: &ContentHash) -> bool {
        self.blobs.read().unwrap().contains_key(hash)
    }
}

impl ResultCache for MemoryStore {
    fn cache_get(&self, fingerprint: &ContentHash) -> CacheLookup {
        let Some(hash) = self.cache.read().unwrap().get(fingerprint).copied() else {
            return CacheLookup::Miss;
        };
        match self.get_blob(&hash) {
            Ok(Some(bytes)) => CacheLookup::Hit { hash, bytes },
            Ok(None) => {
                self.cache.write().unwrap().remove(fingerprint);
                CacheLookup::Miss
            }
            Err(_) => {
                self.cache.write().unwrap().remove(fingerprint);
                CacheLookup::Corrupt {
                    fingerprint: *fingerprint,
                }
            }
        }
    }

    fn cache_put(&self, fingerprint: &ContentHash, hash: &ContentHash, bytes: &[u8]) -> Result<(), StoreError> {
        verify(hash, bytes)?;
        self.put_blob(bytes)?;
        self.cache.write().unwrap().insert(*fingerprint, *hash);
        Ok(())
    }

    fn clear_cache(&self) -> Result<(), StoreError> {
        self.cache.write().unwrap().clear();
        Ok(())
    }
}
