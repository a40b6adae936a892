//! Atomic artifact writes and the per-directory lock.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use causalkg::{Error, Result};
use tempfile::NamedTempFile;

const LOCK_NAME: &str = ".causalkg.lock";

fn parent_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes through a temporary file in the target directory, then renames
/// it into place, so readers never see a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_of(path);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Validation(format!("serializing {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Fails with an I/O error unless every path exists.
pub fn require_inputs(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(*p, io::Error::new(io::ErrorKind::NotFound, "input does not exist")));
        }
    }
    Ok(())
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock(PathBuf);

impl OutputLock {
    /// Locks `dir`, creating it if needed. A second holder gets an I/O
    /// error naming the lock file; a lock left by a crashed run has to be
    /// removed by hand.
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_NAME);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == io::ErrorKind::AlreadyExists {
                    Error::io(&path, io::Error::new(e.kind(), "output directory is locked by another run"))
                } else {
                    Error::io(&path, e)
                }
            })?;
        writeln!(file, "{}", std::process::id()).map_err(|e| Error::io(&path, e))?;
        Ok(OutputLock(path))
    }

    /// Locks the directory that will contain `file`.
    pub fn for_file(file: &Path) -> Result<Self> {
        Self::acquire(parent_of(file))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}
