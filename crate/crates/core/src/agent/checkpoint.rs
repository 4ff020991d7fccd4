//! Checkpoint directories: `checkpoint_<update_steps>/` holding `manifest.json`
//! and one little-endian blob per named parameter array.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::element_count;

pub const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;
const PREFIX: &str = "checkpoint_";

#[derive(Clone, Debug, PartialEq)]
pub enum ParamArray {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

impl ParamArray {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        ParamArray::F64 { shape, data }
    }

    pub fn i64(shape: Vec<usize>, data: Vec<i64>) -> Self {
        ParamArray::I64 { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ParamArray::F64 { shape, .. } | ParamArray::I64 { shape, .. } => shape,
        }
    }

    fn dtype(&self) -> &'static str {
        match self {
            ParamArray::F64 { .. } => "f64",
            ParamArray::I64 { .. } => "i64",
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            ParamArray::F64 { data, .. } => data.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ParamArray::I64 { data, .. } => data.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_bytes(dtype: &str, shape: Vec<usize>, bytes: &[u8]) -> Result<Self> {
        let n = element_count(&shape);
        if bytes.len() != n * 8 {
            return Err(Error::Corrupt(format!("parameter blob has {} bytes, expected {}", bytes.len(), n * 8)));
        }
        let words = bytes.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).unwrap());
        match dtype {
            "f64" => Ok(ParamArray::F64 { shape, data: words.map(f64::from_le_bytes).collect() }),
            "i64" => Ok(ParamArray::I64 { shape, data: words.map(i64::from_le_bytes).collect() }),
            other => Err(Error::Corrupt(format!("unknown parameter dtype `{other}`"))),
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            ParamArray::F64 { data, .. } => Some(data),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            ParamArray::I64 { data, .. } => Some(data),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    file: String,
    crc32: u32,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    update_steps: u64,
    params: Vec<Entry>,
}

pub fn checkpoint_dir(root: &Path, update_steps: u64) -> PathBuf {
    root.join(format!("{PREFIX}{update_steps}"))
}

/// Checkpoint numbers with a manifest under `root`, ascending.
pub fn list(root: &Path) -> Vec<u64> {
    let Ok(entries) = fs::read_dir(root) else { return Vec::new() };
    let mut ids: Vec<u64> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let n = name.strip_prefix(PREFIX)?.parse().ok()?;
            e.path().join(MANIFEST).is_file().then_some(n)
        })
        .collect();
    ids.sort_unstable();
    ids
}

/// Writes a checkpoint atomically: a hidden temp directory renamed into place.
pub fn write(root: &Path, update_steps: u64, params: &BTreeMap<String, ParamArray>) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let target = checkpoint_dir(root, update_steps);
    if target.exists() {
        return Err(Error::Usage(format!("checkpoint {update_steps} already exists")));
    }
    let tmp = root.join(format!(".tmp_{PREFIX}{update_steps}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    let mut entries = Vec::with_capacity(params.len());
    for (i, (name, array)) in params.iter().enumerate() {
        let bytes = array.to_bytes();
        let file = format!("p{i}.bin");
        fs::write(tmp.join(&file), &bytes)?;
        entries.push(Entry {
            name: name.clone(),
            dtype: array.dtype().into(),
            shape: array.shape().to_vec(),
            file,
            crc32: crc32fast::hash(&bytes),
        });
    }
    let manifest = Manifest { format_version: FORMAT_VERSION, update_steps, params: entries };
    fs::write(tmp.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Reads every parameter of a checkpoint, verifying checksums.
pub fn read(dir: &Path) -> Result<(u64, BTreeMap<String, ParamArray>)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: manifest.format_version, expected: FORMAT_VERSION });
    }
    let mut params = BTreeMap::new();
    for e in manifest.params {
        let bytes = fs::read(dir.join(&e.file))?;
        if crc32fast::hash(&bytes) != e.crc32 {
            return Err(Error::Corrupt(format!("checksum mismatch for parameter `{}`", e.name)));
        }
        params.insert(e.name, ParamArray::from_bytes(&e.dtype, e.shape, &bytes)?);
    }
    Ok((manifest.update_steps, params))
}
