//! Output files appear either complete or not at all.

use std::fs;
use std::io::Write;
use std::path::Path;

use mrp4d::lightfield::Layout;
use mrp4d::LightField4D;

use crate::CliError;

fn parent(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(parent(path))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Writes `lf` as a container file, or as an SAI directory when `layout`
/// asks for one. An existing directory is never overwritten.
pub fn write_lightfield(path: &Path, lf: &LightField4D, layout: Layout) -> Result<(), CliError> {
    match layout {
        Layout::PlanarRaw => write_file(path, &lf.to_container_bytes()),
        Layout::SaiGrid => {
            if path.exists() {
                return Err(CliError::Usage(format!("{} already exists", path.display())));
            }
            let tmp = tempfile::Builder::new().prefix(".mrp4d-").tempdir_in(parent(path))?;
            lf.store(tmp.path(), Layout::SaiGrid)?;
            fs::rename(tmp.keep(), path)?;
            Ok(())
        }
    }
}
