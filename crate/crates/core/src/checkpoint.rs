//! Parameter checkpoints: a flat little-endian f64 blob plus a JSON sidecar
//! listing tensor names, shapes and the seed the parameters came from.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
        Self { name: name.into(), rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Types that round-trip through a list of named tensors.
pub trait TensorSet: Sized {
    fn tensors(&self) -> Vec<NamedTensor>;
    fn from_tensors(tensors: &[NamedTensor]) -> Result<Self>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub seed: u64,
    pub tensors: Vec<TensorShape>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_tensors(path: &Path, kind: &str, seed: u64, tensors: &[NamedTensor]) -> Result<()> {
    let mut bytes = Vec::with_capacity(tensors.iter().map(|t| t.data.len() * 8).sum());
    for t in tensors {
        for v in &t.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = CheckpointMeta {
        kind: kind.to_string(),
        seed,
        tensors: tensors.iter().map(|t| TensorShape { name: t.name.clone(), rows: t.rows, cols: t.cols }).collect(),
    };
    let mp = meta_path(path);
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&mp, text + "\n").map_err(|e| Error::io(&mp, e))
}

pub fn load_tensors(path: &Path) -> Result<(CheckpointMeta, Vec<NamedTensor>)> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&mp, e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected: usize = meta.tensors.iter().map(|t| t.rows * t.cols).sum();
    if bytes.len() != expected * 8 {
        return Err(Error::format(path, format!("expected {} bytes, found {}", expected * 8, bytes.len())));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let tensors = meta
        .tensors
        .iter()
        .map(|s| NamedTensor {
            name: s.name.clone(),
            rows: s.rows,
            cols: s.cols,
            data: values.by_ref().take(s.rows * s.cols).collect(),
        })
        .collect();
    Ok((meta, tensors))
}

pub fn save<T: TensorSet>(path: &Path, kind: &str, seed: u64, value: &T) -> Result<()> {
    save_tensors(path, kind, seed, &value.tensors())
}

/// Loads a checkpoint, checking that it was written for `kind`.
pub fn load<T: TensorSet>(path: &Path, kind: &str) -> Result<(T, u64)> {
    let (meta, tensors) = load_tensors(path)?;
    if meta.kind != kind {
        return Err(Error::format(path, format!("checkpoint holds `{}`, expected `{kind}`", meta.kind)));
    }
    Ok((T::from_tensors(&tensors)?, meta.seed))
}
