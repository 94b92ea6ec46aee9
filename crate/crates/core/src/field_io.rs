//! Binary field format.
//!
//! ```text
//! offset  size        content
//! 0       4           magic "PPLF"
//! 4       1           format version (1)
//! 5       1           dimension n (1..=4)
//! 6       2           points per axis, u16 little endian
//! 8       8           half width, f64 little endian
//! 16      8 n         center coordinates, f64 little endian
//! 16+8n   8 N^n       values in row-major order (last axis fastest), f64 LE
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, MAX_GRID_DIM};

pub const MAGIC: &[u8; 4] = b"PPLF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

/// Total encoded size of a field on `spec`.
pub fn encoded_len(spec: &GridSpec) -> usize {
    HEADER_LEN + 8 * spec.dim() + 8 * spec.node_count()
}

pub fn to_bytes(u: &ScalarField) -> Result<Vec<u8>> {
    let spec = u.spec();
    let ppa = u16::try_from(spec.points_per_axis()).map_err(|_| {
        Error::DimensionOverflow(format!(
            "{} points per axis do not fit the 16-bit header field",
            spec.points_per_axis()
        ))
    })?;
    let mut out = Vec::with_capacity(encoded_len(spec));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(spec.dim() as u8);
    out.extend_from_slice(&ppa.to_le_bytes());
    out.extend_from_slice(&spec.half_width().to_le_bytes());
    for c in spec.center() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn f64_at(bytes: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(bytes[off..off + 8].try_into().expect("slice of length 8"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}",
            &bytes[0..4]
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let dim = bytes[5] as usize;
    if dim == 0 || dim > MAX_GRID_DIM {
        return Err(Error::DimensionOverflow(format!(
            "dimension {dim} outside 1..={MAX_GRID_DIM}"
        )));
    }
    let ppa = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let half_width = f64_at(bytes, 8);
    let count = ppa
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::DimensionOverflow(format!("{ppa}^{dim} nodes overflow")))?;
    let expected = count
        .checked_mul(8)
        .and_then(|v| v.checked_add(HEADER_LEN + 8 * dim))
        .ok_or_else(|| Error::DimensionOverflow(format!("{ppa}^{dim} nodes overflow")))?;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let center: Vec<f64> = (0..dim)
        .map(|d| f64_at(bytes, HEADER_LEN + 8 * d))
        .collect();
    let spec = GridSpec::new(dim, center, half_width, ppa)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let base = HEADER_LEN + 8 * dim;
    let values = (0..count).map(|k| f64_at(bytes, base + 8 * k)).collect();
    ScalarField::new(spec, values)
}

pub fn field_io_write(u: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(u)?).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn field_io_read(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}
