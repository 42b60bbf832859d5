//! Atomic artifact writes and provenance manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lsvl_core::map_store::RasterMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest<C> {
    pub tool: String,
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: C,
    pub outputs: Vec<String>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, config: C, outputs: &[&str]) -> Self {
        Self {
            tool: "lsvl".into(),
            command: command.into(),
            version: VERSION.into(),
            config_hash: config_hash(&config),
            config,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Hex SHA-256 of the JSON form of `config`.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `<path>.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn parent_dir(path: &Path) -> Result<PathBuf, CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    Ok(parent)
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let parent = parent_dir(path)?;
    let tmp = NamedTempFile::new_in(&parent).map_err(|e| CliError::io(&parent, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out)?;
        out.flush().map_err(|e| CliError::io(path, e))?;
    }
    // temp files are created owner-only; give the artifact ordinary permissions
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(0o644)).map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, |out| out.write_all(bytes).map_err(|e| CliError::io(path, e)))
}

pub fn write_json_atomic<V: Serialize>(path: &Path, value: &V) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, e))?;
    bytes.push(b'\n');
    write_bytes_atomic(path, &bytes)
}

/// Saves the PNG and its georeferencing sidecar into a scratch directory
/// beside `path`, then renames both into place.
pub fn save_raster_atomic(raster: &RasterMap, path: &Path) -> Result<(), CliError> {
    let parent = parent_dir(path)?;
    let scratch = tempfile::tempdir_in(&parent).map_err(|e| CliError::io(&parent, e))?;
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("{}: not a file path", path.display())))?;
    let staged = scratch.path().join(name);
    raster.save(&staged).map_err(|e| CliError::map(path, e))?;
    let sidecar = lsvl_core::map_store::raster_sidecar(path);
    fs::rename(lsvl_core::map_store::raster_sidecar(&staged), &sidecar).map_err(|e| CliError::io(&sidecar, e))?;
    fs::rename(&staged, path).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.txt");
        write_bytes_atomic(&path, b"first").unwrap();
        write_bytes_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn failed_fill_leaves_target_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_bytes_atomic(&path, b"keep").unwrap();
        let r = write_atomic(&path, |out| {
            out.write_all(b"partial").unwrap();
            Err(CliError::Config("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(fs::read(&path).unwrap(), b"keep");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn hash_tracks_config() {
        assert_eq!(config_hash(&(1, "a")), config_hash(&(1, "a")));
        assert_ne!(config_hash(&(1, "a")), config_hash(&(2, "a")));
        assert_eq!(config_hash(&0).len(), 64);
    }

    #[test]
    fn manifest_sidecar_name() {
        assert_eq!(manifest_path(Path::new("a/map.bin")), PathBuf::from("a/map.bin.manifest.json"));
    }
}
