//! Feature and similarity file formats.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "P2SF"
//! 4       4     version (u32, currently 1)
//! 8       8     rows T (u64)
//! 16      8     dimension D (u64)
//! 24      4*T*D row-major f32 values
//! ```
//!
//! Similarity curves are stored with `D = 1`. A plain text file with one
//! number per line (blank lines and `#` comments ignored) is also accepted
//! as a single-column matrix.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"P2SF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported format version {version}")]
    Version { path: String, version: u32 },
    #[error("{path}: truncated file (expected {expected} bytes, found {found})")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}: cannot parse `{text}` as a number")]
    Text {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}: matrix is empty")]
    Empty { path: String },
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(rows * dim, data.len(), "matrix shape does not match data");
        Self { rows, dim, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.iter().map(|&v| v as f32).collect())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Values of a single-column matrix, or the first row of a one-row
    /// matrix, widened to `f64`.
    pub fn as_vector(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

pub fn encode(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim as u64).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &str) -> Result<Matrix, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            path: path.into(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(FormatError::Version {
            path: path.into(),
            version,
        });
    }
    let rows = u64_at(8) as usize;
    let dim = u64_at(16) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(FormatError::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    if rows == 0 || dim == 0 {
        return Err(FormatError::Empty { path: path.into() });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix { rows, dim, data })
}

fn parse_text(text: &str, path: &str) -> Result<Matrix, FormatError> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f32 = line.parse().map_err(|_| FormatError::Text {
            path: path.into(),
            line: i + 1,
            text: line.into(),
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(FormatError::Empty { path: path.into() });
    }
    Ok(Matrix::new(values.len(), 1, values))
}

/// Read either a binary file or a one-column text file.
pub fn read_matrix(path: &Path) -> Result<Matrix, FormatError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| FormatError::Io {
        path: display.clone(),
        source,
    })?;
    if bytes.starts_with(MAGIC) {
        decode(&bytes, &display)
    } else {
        let text = String::from_utf8_lossy(&bytes);
        parse_text(&text, &display)
    }
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), FormatError> {
    fs::write(path, encode(m)).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}
