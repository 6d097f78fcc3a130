//! On-disk formats.
//!
//! Cube files: magic `ITC1`, then `rows`, `cols`, `bands` as little-endian
//! `u64`, then `rows*cols*bands` little-endian `f64` values with the band
//! index fastest, then column, then row. Small fixtures may instead be CSV
//! with one `r,c,b,value` row per entry.
//!
//! Label files: CSV of non-negative integers, one line per image row; or
//! magic `ITL1`, `rows` and `cols` as little-endian `u64`, then one
//! little-endian `u32` per pixel in row-major order.

use crate::error::{Error, Result};
use crate::regions::LabelMap;
use crate::tensor::Cube;
use std::fs;
use std::path::Path;

pub const CUBE_MAGIC: &[u8; 4] = b"ITC1";
pub const LABEL_MAGIC: &[u8; 4] = b"ITL1";

pub fn encode_cube(c: &Cube) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 8 * c.len());
    out.extend_from_slice(CUBE_MAGIC);
    for d in [c.rows(), c.cols(), c.bands()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in c.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> Result<u64> {
    bytes
        .get(at..at + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

fn dim(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
}

/// Decodes a binary cube, or a CSV cube when the magic is absent.
pub fn decode_cube(bytes: &[u8]) -> Result<Cube> {
    if !bytes.starts_with(CUBE_MAGIC) {
        return parse_cube_csv(bytes);
    }
    let rows = dim(read_u64(bytes, 4)?)?;
    let cols = dim(read_u64(bytes, 12)?)?;
    let bands = dim(read_u64(bytes, 20)?)?;
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(bands))
        .ok_or_else(|| Error::Format("cube size overflows".into()))?;
    let body = &bytes[28..];
    if body.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Cube::new(rows, cols, bands, data)
}

fn parse_cube_csv(bytes: &[u8]) -> Result<Cube> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Format("cube file is neither ITC1 nor UTF-8 CSV".into()))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if entries.is_empty() && fields == ["r", "c", "b", "value"] {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Format(format!("line {}: expected r,c,b,value", n + 1)));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("line {}: bad index {s:?}", n + 1)))
        };
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value {:?}", n + 1, fields[3])))?;
        entries.push((idx(fields[0])?, idx(fields[1])?, idx(fields[2])?, value));
    }
    if entries.is_empty() {
        return Err(Error::Format("empty cube file".into()));
    }
    let rows = entries.iter().map(|e| e.0).max().unwrap() + 1;
    let cols = entries.iter().map(|e| e.1).max().unwrap() + 1;
    let bands = entries.iter().map(|e| e.2).max().unwrap() + 1;
    let mut data = vec![0.0; rows * cols * bands];
    let mut seen = vec![false; data.len()];
    for (r, c, b, v) in entries {
        let i = (r * cols + c) * bands + b;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Format(format!("duplicate entry ({r},{c},{b})")));
        }
        data[i] = v;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Format("CSV cube does not cover every entry".into()));
    }
    Cube::new(rows, cols, bands, data)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<Cube> {
    decode_cube(&fs::read(path)?)
}

pub fn write_cube(path: impl AsRef<Path>, c: &Cube) -> Result<()> {
    fs::write(path, encode_cube(c))?;
    Ok(())
}

/// Raw label grid as stored on disk, before any validation of ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelGrid> {
    if bytes.starts_with(LABEL_MAGIC) {
        let rows = dim(read_u64(bytes, 4)?)?;
        let cols = dim(read_u64(bytes, 12)?)?;
        let body = &bytes[20..];
        if body.len() != rows * cols * 4 {
            return Err(Error::Format(format!(
                "expected {} label bytes, found {}",
                rows * cols * 4,
                body.len()
            )));
        }
        let labels = body
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        return Ok(LabelGrid { rows, cols, labels });
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Format("label file is neither ITL1 nor UTF-8 CSV".into()))?;
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<u32> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Format(format!("line {}: bad label {:?}", n + 1, f.trim())))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "line {}: {} labels, expected {w}",
                    n + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        labels.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty label file".into()))?;
    Ok(LabelGrid { rows, cols, labels })
}

pub fn encode_labels_binary(rows: usize, cols: usize, labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for &l in labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn encode_labels_csv(rows: usize, cols: usize, labels: &[usize]) -> String {
    let mut out = String::new();
    for r in 0..rows {
        let line: Vec<String> = labels[r * cols..(r + 1) * cols]
            .iter()
            .map(|l| l.to_string())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses a label file and compacts its ids to `0..n`.
pub fn load_labelmap(bytes: &[u8]) -> Result<LabelMap> {
    let grid = decode_labels(bytes)?;
    LabelMap::compacted(grid.rows, grid.cols, &grid.labels)
}

pub fn read_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    load_labelmap(&fs::read(path)?)
}

pub fn read_label_grid(path: impl AsRef<Path>) -> Result<LabelGrid> {
    decode_labels(&fs::read(path)?)
}

/// Writes CSV when the path ends in `.csv`, binary otherwise.
pub fn write_labels(path: impl AsRef<Path>, rows: usize, cols: usize, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        fs::write(path, encode_labels_csv(rows, cols, labels))?;
    } else {
        fs::write(path, encode_labels_binary(rows, cols, labels))?;
    }
    Ok(())
}
