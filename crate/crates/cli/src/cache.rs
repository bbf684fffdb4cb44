//! On-disk result cache keyed by the SHA-256 of (command, params, version).

use anyhow::{Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "CONFDIMLAB_CACHE";

pub struct Cache {
    dir: PathBuf,
}

/// Hex SHA-256 of the canonical JSON of the key triple. Object keys are
/// sorted by `serde_json`, so equal parameters give equal keys.
pub fn cache_key(command: &str, params: &Value, version: &str) -> String {
    let canonical = serde_json::json!({
        "command": command,
        "params": params,
        "version": version,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Cache {
    /// The explicit directory wins over the environment variable.
    pub fn from_options(dir: Option<PathBuf>) -> Option<Self> {
        dir.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .map(|dir| Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.out"))
    }

    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        fs::read(self.path(key)).ok()
    }

    pub fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating cache directory {}", self.dir.display()))?;
        write_atomic(&self.path(key), bytes)
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_ignores_object_order_and_tracks_version() {
        let a: Value = serde_json::from_str(r#"{"m":3,"k":4}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"k":4,"m":3}"#).unwrap();
        assert_eq!(cache_key("elementary", &a, "1"), cache_key("elementary", &b, "1"));
        assert_ne!(cache_key("elementary", &a, "1"), cache_key("elementary", &a, "2"));
        assert_ne!(cache_key("elementary", &a, "1"), cache_key("interval", &a, "1"));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::from_options(Some(dir.path().join("c"))).unwrap();
        assert!(cache.get("abc").is_none());
        cache.put("abc", b"payload").unwrap();
        assert_eq!(cache.get("abc").unwrap(), b"payload");
    }
}
