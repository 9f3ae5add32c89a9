use std::io::Write;
use std::path::Path;

use crate::error::{Result, VdmError};

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| VdmError::file(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| VdmError::Invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| VdmError::file(&tmp, e))?;
    f.write_all(bytes).map_err(|e| VdmError::file(&tmp, e))?;
    f.sync_all().map_err(|e| VdmError::file(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| VdmError::file(path, e))
}

/// Renders into a buffer with `f` and writes the buffer atomically.
pub fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}
