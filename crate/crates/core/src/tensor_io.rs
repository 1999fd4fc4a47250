//! Binary tensor container shared by spectrograms, bases and feature files,
//! plus CSV export helpers.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size       field
//! 0       4          magic  b"GCT1"
//! 4       4          dtype  u32   1 = f64, 3 = complex f64 (re, im pairs)
//! 8       4          ndim   u32
//! 12      8 * ndim   dims   u64 each, outermost first
//! ..      ..         payload, row-major
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GCT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DType {
    F64 = 1,
    C128 = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F64(_) => DType::F64,
            TensorData::C128(_) => DType::C128,
        }
    }

    pub fn from_matrix(m: &Array2<f64>) -> Self {
        Tensor {
            dims: vec![m.nrows(), m.ncols()],
            data: TensorData::F64(m.iter().copied().collect()),
        }
    }

    pub fn from_complex3(a: &Array3<Complex64>) -> Self {
        Tensor {
            dims: a.shape().to_vec(),
            data: TensorData::C128(a.iter().copied().collect()),
        }
    }

    pub fn into_matrix(self) -> Result<Array2<f64>> {
        match (self.dims.as_slice(), self.data) {
            ([r, c], TensorData::F64(v)) => Array2::from_shape_vec((*r, *c), v)
                .map_err(|e| Error::Contract(format!("tensor shape: {e}"))),
            (dims, _) => Err(Error::Contract(format!(
                "expected a 2-d f64 tensor, found dims {dims:?}"
            ))),
        }
    }

    pub fn into_complex3(self) -> Result<Array3<Complex64>> {
        match (self.dims.as_slice(), self.data) {
            ([a, b, c], TensorData::C128(v)) => Array3::from_shape_vec((*a, *b, *c), v)
                .map_err(|e| Error::Contract(format!("tensor shape: {e}"))),
            (dims, _) => Err(Error::Contract(format!(
                "expected a 3-d complex tensor, found dims {dims:?}"
            ))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let count: usize = self.dims.iter().product();
        let width = match self.dtype() {
            DType::F64 => 8,
            DType::C128 => 16,
        };
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + count * width);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dtype() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::C128(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::Contract(format!("bad tensor file: {why}"));
        let take_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad("truncated header"))
        };
        if bytes.len() < 12 || &bytes[0..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let dtype = take_u32(4)?;
        let ndim = take_u32(8)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut at = 12;
        for _ in 0..ndim {
            let d = bytes
                .get(at..at + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad("truncated dims"))?;
            dims.push(d as usize);
            at += 8;
        }
        let count: usize = dims.iter().product();
        let payload = &bytes[at..];
        let f = |i: usize| f64::from_le_bytes(payload[i * 8..i * 8 + 8].try_into().unwrap());
        let data = match dtype {
            1 => {
                if payload.len() != count * 8 {
                    return Err(bad("payload length does not match dims"));
                }
                TensorData::F64((0..count).map(f).collect())
            }
            3 => {
                if payload.len() != count * 16 {
                    return Err(bad("payload length does not match dims"));
                }
                TensorData::C128(
                    (0..count)
                        .map(|i| Complex64::new(f(2 * i), f(2 * i + 1)))
                        .collect(),
                )
            }
            other => return Err(bad(&format!("unknown dtype {other}"))),
        };
        Ok(Tensor { dims, data })
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_atomic(path, &t.to_bytes())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Renders a matrix as CSV. `{:?}` formatting of f64 round-trips exactly.
pub fn matrix_to_csv(m: &Array2<f64>, header: Option<&[String]>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.join(","));
        s.push('\n');
    }
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    write_atomic(path, matrix_to_csv(m, header).as_bytes())
}
