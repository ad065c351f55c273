//! Dense matrix payloads: inline rows, CSV files, or the `NCCPMAT1` binary sidecar.
//!
//! The binary layout is the 8-byte magic `NCCPMAT1`, then `rows` and `cols` as
//! little-endian `u64`, then `rows·cols` little-endian `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nccp_core::linalg::DenseMatrix;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"NCCPMAT1";

/// A matrix given inline or by a path relative to the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRef {
    Inline(Vec<Vec<f64>>),
    File { path: String },
}

impl MatrixRef {
    pub fn load(&self, base: &Path) -> Result<DenseMatrix> {
        match self {
            MatrixRef::Inline(rows) => {
                if rows.is_empty() {
                    bail!("inline matrix has no rows");
                }
                Ok(DenseMatrix::from_rows(rows)?)
            }
            MatrixRef::File { path } => read_matrix(&base.join(path)),
        }
    }

    /// Path of the referenced file, if any.
    pub fn file(&self, base: &Path) -> Option<PathBuf> {
        match self {
            MatrixRef::File { path } => Some(base.join(path)),
            MatrixRef::Inline(_) => None,
        }
    }
}

/// Reads a `.csv` file or an `NCCPMAT1` sidecar (detected by its magic).
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).with_context(|| format!("reading matrix {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes).with_context(|| format!("decoding {}", path.display()))
    } else {
        parse_csv(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        bail!("missing NCCPMAT1 header");
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into()?) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into()?) as usize;
    let body = &bytes[24..];
    let count = rows.checked_mul(cols).context("matrix size overflow")?;
    if body.len() != count * 8 {
        bail!("expected {} payload bytes for a {rows}x{cols} matrix, found {}", count * 8, body.len());
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DenseMatrix::from_row_major(rows, cols, data)?)
}

pub fn encode_binary(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_binary(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&encode_binary(m))?;
    Ok(())
}

fn parse_csv(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.iter().map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?}"))).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("empty matrix file");
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.to_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, -2.5, 0.1], vec![3.0, 1e-300, -0.0]]).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let m = sample();
        let back = decode_binary(&encode_binary(&m)).unwrap();
        assert_eq!(back.rows(), 2);
        let bits = |d: &DenseMatrix| d.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn binary_header_layout() {
        let bytes = encode_binary(&sample());
        assert_eq!(&bytes[..8], b"NCCPMAT1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 24 + 6 * 8);
    }

    #[test]
    fn truncated_binary_rejected() {
        let mut bytes = encode_binary(&sample());
        bytes.pop();
        assert!(decode_binary(&bytes).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv(&p, &sample()).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(back.data(), sample().data());
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(parse_csv(b"1,2\n3\n").is_err());
    }
}
