use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use super::{verify, write_atomic, BlobStore, CacheLookup, ResultCache, StoreError};
use crate::hash::ContentHash;

/// Default size bound for [`FsStore::gc`]: 2 GiB.
pub const DEFAULT_GC_LIMIT: u64 = 2 << 30;

/// Directory-backed store.
///
/// ```text
/// <root>/blobs/<2-hex>/<hash>        content-addressed bytes
/// <root>/cache/<2-hex>/<fingerprint> hex content hash + LF
/// <root>/workflows/                  workflow files
/// <root>/documents/                  ingest manifests
/// <root>/reports/                    execution reports
/// ```
///
/// Reads refresh a file's modification time; [`FsStore::gc`] evicts the
/// least recently used blobs first.
#[derive(Debug, Clone)]
pub struct FsStore {
    root: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GcReport {
    pub blobs_removed: usize,
    pub cache_entries_removed: usize,
    pub bytes_freed: u64,
    pub bytes_retained: u64,
}

fn touch(path: &Path) {
    if let Ok(f) = File::options().write(true).open(path) {
        let _ = f.set_modified(SystemTime::now());
    }
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, StoreError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
        Err(e) => Err(StoreError::io(path, e)),
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let Ok(shards) = fs::read_dir(dir) else { return out };
    for shard in shards.flatten() {
        if let Ok(entries) = fs::read_dir(shard.path()) {
            out.extend(entries.flatten().map(|e| e.path()).filter(|p| p.is_file()));
        }
    }
    out.sort();
    out
}

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["blobs", "cache", "workflows", "documents", "reports"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn workflows_dir(&self) -> PathBuf {
        self.root.join("workflows")
    }

    pub fn documents_dir(&self) -> PathBuf {
        self.root.join("documents")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn blob_path(&self, hash: &ContentHash) -> PathBuf {
        self.root.join("blobs").join(hash.prefix()).join(hash.to_hex())
    }

    fn entry_path(&self, fingerprint: &ContentHash) -> PathBuf {
        self.root.join("cache").join(fingerprint.prefix()).join(fingerprint.to_hex())
    }

    /// Evicts least-recently-used blobs until the total blob size is at most
    /// `limit` bytes. Blobs in `pinned` are never evicted. Cache entries
    /// pointing at evicted blobs are removed too.
    pub fn gc(&self, limit: u64, pinned: &BTreeSet<ContentHash>) -> Result<GcReport, StoreError> {
        let mut blobs: Vec<(SystemTime, u64, PathBuf, Option<ContentHash>)> = files_under(&self.root.join("blobs"))
            .into_iter()
            .filter_map(|p| {
                let meta = fs::metadata(&p).ok()?;
                let hash = p.file_name()?.to_str()?.parse().ok();
                Some((meta.modified().ok()?, meta.len(), p, hash))
            })
            .collect();
        let mut total: u64 = blobs.iter().map(|b| b.1).sum();
        blobs.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));
        let mut report = GcReport::default();
        let mut evicted = BTreeSet::new();
        for (_, size, path, hash) in blobs {
            if total <= limit {
                break;
            }
            if hash.as_ref().is_some_and(|h| pinned.contains(h)) {
                continue;
            }
            fs::remove_file(&path).map_err(|e| StoreError::io(&path, e))?;
            total -= size;
            report.blobs_removed += 1;
            report.bytes_freed += size;
            if let Some(h) = hash {
                evicted.insert(h);
            }
        }
        if !evicted.is_empty() {
            for entry in files_under(&self.root.join("cache")) {
                let target = fs::read_to_string(&entry).ok().and_then(|s| s.trim().parse::<ContentHash>().ok());
                if target.is_none_or(|h| evicted.contains(&h)) {
                    fs::remove_file(&entry).map_err(|e| StoreError::io(&entry, e))?;
                    report.cache_entries_removed += 1;
                }
            }
        }
        report.bytes_retained = total;
        Ok(report)
    }
}

impl BlobStore for FsStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash, StoreError> {
        let hash = ContentHash::of(bytes);
        let path = self.blob_path(&hash);
        if path.exists() {
            touch(&path);
        } else {
            write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    fn get_blob(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.blob_path(hash);
        let Some(bytes) = read_optional(&path)? else {
            return Ok(None);
        };
        if let Err(e) = verify(hash, &bytes) {
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        touch(&path);
        Ok(Some(bytes))
    }

    fn contains_blob(&self, hash: &ContentHash) -> bool {
        self.blob_path(hash).is_file()
    }
}

impl ResultCache for FsStore {
    fn cache_get(&self, fingerprint: &ContentHash) -> CacheLookup {
        let path = self.entry_path(fingerprint);
        let raw = match fs::read_to_string(&path) {
            Ok(s) => s,
            Err(_) => return CacheLookup::Miss,
        };
        let corrupt = || {
            let _ = fs::remove_file(&path);
            CacheLookup::Corrupt {
                fingerprint: *fingerprint,
            }
        };
        let Ok(hash) = raw.trim_end_matches('\n').parse::<ContentHash>() else {
            return corrupt();
        };
        match self.get_blob(&hash) {
            Ok(Some(bytes)) => {
                touch(&path);
                CacheLookup::Hit { hash, bytes }
            }
            Ok(None) => {
                let _ = fs::remove_file(&path);
                CacheLookup::Miss
            }
            Err(_) => corrupt(),
        }
    }

    fn cache_put(&self, fingerprint: &ContentHash, hash: &ContentHash, bytes: &[u8]) -> Result<(), StoreError> {
        verify(hash, bytes)?;
        self.put_blob(bytes)?;
        write_atomic(&self.entry_path(fingerprint), format!("{hash}\n").as_bytes())
    }

    fn clear_cache(&self) -> Result<(), StoreError> {
        let dir = self.root.join("cache");
        match fs::remove_dir_all(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(StoreError::io(&dir, e)),
        }
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))
    }
}
