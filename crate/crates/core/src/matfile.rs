//! Matrix files: a small binary container and plain CSV.
//!
//! Binary layout: 4-byte magic, `rows: u32`, `cols: u32` (little-endian),
//! then `rows * cols` little-endian `f32` values in row-major order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"BGF1";
pub const SKELETON_MAGIC: [u8; 4] = *b"BGS1";

const HEADER_LEN: usize = 12;

pub fn encode_matrix(magic: [u8; 4], m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_matrix(magic: [u8; 4], bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(&magic)
            ),
        ));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * 4 {
        return Err(Error::format(
            path,
            format!(
                "payload has {} bytes, header says {rows}x{cols} f32",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn write_matrix(path: &Path, magic: [u8; 4], m: &Matrix) -> Result<()> {
    fs::write(path, encode_matrix(magic, m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path, magic: [u8; 4]) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(magic, &bytes, path)
}

/// Writes a CSV with the given header; the first column is the frame index.
pub fn write_csv(path: &Path, header: &[String], m: &Matrix) -> Result<()> {
    let mut out = String::new();
    out.push_str("frame");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (i, row) in m.row_iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`]; returns the header (without the
/// frame column) and the data.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty csv")),
    };
    let mut names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.first().map(String::as_str) != Some("frame") {
        return Err(Error::format(path, "first column must be `frame`"));
    }
    names.remove(0);
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() + 1 {
            return Err(Error::format(
                path,
                format!(
                    "line {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    names.len() + 1
                ),
            ));
        }
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::format(path, format!("line {}: bad number `{f}`", lineno + 2))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = names.len();
    Ok((names, Matrix::from_vec(rows, cols, data)?))
}
