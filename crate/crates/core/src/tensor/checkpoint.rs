//! Binary checkpoint format.
//!
//! ```text
//! b"FSTCKPT1"                      8-byte magic
//! u64 little-endian                byte length of the layout descriptor
//! [u8; len]                        UTF-8 layout descriptor (see `Layout::descriptor`)
//! [f64 little-endian; n]           parameter values, n = layout size
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Layout, ParameterVector};

pub const MAGIC: &[u8; 8] = b"FSTCKPT1";

pub fn encode(params: &ParameterVector) -> Vec<u8> {
    let descriptor = params.layout().descriptor();
    let mut out = Vec::with_capacity(16 + descriptor.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(descriptor.len() as u64).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ParameterVector> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing FSTCKPT1 magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| Error::Format("descriptor too long".into()))?;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(Error::Format("truncated layout descriptor".into()));
    }
    let descriptor = std::str::from_utf8(&body[..len])
        .map_err(|_| Error::Format("layout descriptor is not UTF-8".into()))?;
    let layout = Layout::parse_descriptor(descriptor)?;
    let raw = &body[len..];
    let n = layout.num_values();
    if raw.len() != n * 8 {
        return Err(Error::Format(format!(
            "expected {} value bytes for layout, found {}",
            n * 8,
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParameterVector::new(values, layout)
}

/// Writes `bytes` to a sibling temp file and renames it into place, so a
/// crash never leaves a half-written file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save(path: &Path, params: &ParameterVector) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load(path: &Path) -> Result<ParameterVector> {
    decode(&fs::read(path)?)
}
