//! Raw little-endian array blobs described by a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::U32 => 4,
        }
    }
}

/// Manifest entry for one `<name>.bin` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub byte_length: usize,
}

impl BlobEntry {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }
}

fn blob_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}.bin"))
}

pub fn write_f64(dir: &Path, name: &str, shape: Vec<usize>, data: &[f64]) -> Result<BlobEntry> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "blob `{name}` shape/data mismatch");
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = blob_path(dir, name);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(BlobEntry {
        name: name.to_string(),
        dtype: Dtype::F64,
        shape,
        byte_length: bytes.len(),
    })
}

pub fn write_u32(dir: &Path, name: &str, shape: Vec<usize>, data: &[u32]) -> Result<BlobEntry> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "blob `{name}` shape/data mismatch");
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = blob_path(dir, name);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(BlobEntry {
        name: name.to_string(),
        dtype: Dtype::U32,
        shape,
        byte_length: bytes.len(),
    })
}

fn read_raw(dir: &Path, entry: &BlobEntry, dtype: Dtype) -> Result<Vec<u8>> {
    if entry.dtype != dtype {
        return Err(Error::Manifest {
            path: dir.to_path_buf(),
            detail: format!("blob `{}` has dtype {:?}, expected {:?}", entry.name, entry.dtype, dtype),
        });
    }
    let path = blob_path(dir, &entry.name);
    if !path.is_file() {
        return Err(Error::MissingBlob {
            name: entry.name.clone(),
            path,
        });
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = entry.element_count();
    if entry.byte_length != expected * dtype.width() || bytes.len() != entry.byte_length {
        return Err(Error::ShapeMismatch {
            name: entry.name.clone(),
            expected,
            found: bytes.len() / dtype.width(),
        });
    }
    Ok(bytes)
}

pub fn read_f64(dir: &Path, entry: &BlobEntry) -> Result<Vec<f64>> {
    let bytes = read_raw(dir, entry, Dtype::F64)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_u32(dir: &Path, entry: &BlobEntry) -> Result<Vec<u32>> {
    let bytes = read_raw(dir, entry, Dtype::U32)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Finds `name` in a manifest blob list.
pub fn find<'a>(dir: &Path, blobs: &'a [BlobEntry], name: &str) -> Result<&'a BlobEntry> {
    blobs.iter().find(|b| b.name == name).ok_or_else(|| Error::MissingBlob {
        name: name.to_string(),
        path: blob_path(dir, name),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest types always serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
