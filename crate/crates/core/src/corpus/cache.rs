//! Content-addressed on-disk cache for remote call results.
//!
//! Layout: `<root>/<first two hex chars>/<key>.bin`, where `key` is the hex
//! SHA-256 of the canonical request payload. Each file carries a small header
//! (magic, creation time, SHA-256 of the value) so that truncated or
//! tampered entries surface as [`CacheError::Corrupt`] instead of being
//! replayed. Writes go to a temporary file in the target directory and are
//! renamed into place, so concurrent readers only ever see complete entries.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hashing::sha256_hex;

const MAGIC: &[u8; 4] = b"SQC1";
const HEADER_LEN: usize = 4 + 8 + 32;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt cache entry {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("invalid cache key {0:?}")]
    InvalidKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: String,
    pub value: Vec<u8>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    /// Opens (and creates if needed) a cache rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| CacheError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Key of a canonical payload.
    pub fn key_for(payload: &[u8]) -> String {
        sha256_hex(payload)
    }

    pub fn path_for(&self, key: &str) -> Result<PathBuf, CacheError> {
        if key.len() < 2 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(CacheError::InvalidKey(key.to_string()));
        }
        Ok(self.root.join(&key[..2]).join(format!("{key}.bin")))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.path_for(key)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let corrupt = |reason: &str| CacheError::Corrupt {
            path: path.clone(),
            reason: reason.to_string(),
        };
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let created_at = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
        let digest = &bytes[12..HEADER_LEN];
        let value = &bytes[HEADER_LEN..];
        if Sha256::digest(value).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        Ok(Some(CacheEntry {
            key: key.to_string(),
            value: value.to_vec(),
            created_at,
        }))
    }

    pub fn put(&self, key: &str, value: &[u8]) -> Result<(), CacheError> {
        let path = self.path_for(key)?;
        let dir = path.parent().expect("cache path has a parent");
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CacheError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(MAGIC).map_err(io_err(&path))?;
        tmp.write_all(&created_at.to_le_bytes()).map_err(io_err(&path))?;
        tmp.write_all(&Sha256::digest(value)).map_err(io_err(&path))?;
        tmp.write_all(value).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| CacheError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(())
    }

    /// Removes an entry; missing entries are not an error.
    pub fn remove(&self, key: &str) -> Result<(), CacheError> {
        let path = self.path_for(key)?;
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(source) => Err(CacheError::Io { path, source }),
        }
    }

    /// Returns the cached value for `payload`, or invokes `remote` once and
    /// stores its result. Remote errors are never cached.
    pub fn get_or_call<E, F>(&self, payload: &[u8], remote: F) -> Result<Vec<u8>, E>
    where
        E: From<CacheError>,
        F: FnOnce() -> Result<Vec<u8>, E>,
    {
        let key = Self::key_for(payload);
        if let Some(entry) = self.get(&key)? {
            return Ok(entry.value);
        }
        let value = remote()?;
        self.put(&key, &value)?;
        Ok(value)
    }
}
