//! Minimal reader for NumPy `.npy` arrays of numeric little-endian dtypes.

use std::path::Path;

use crate::error::{Error, Result};

/// A 1-D or 2-D array as row-major `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    parse_npy(&bytes).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    let bad = |m: &str| Error::Input(format!("invalid .npy data: {m}"));
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err(bad("missing magic"));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(bad("truncated header"));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        v => return Err(bad(&format!("unsupported version {v}"))),
    };
    let header = bytes
        .get(start..start + header_len)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| bad("truncated header"))?;
    let descr = dict_value(header, "descr").ok_or_else(|| bad("no descr"))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let fortran = dict_value(header, "fortran_order").ok_or_else(|| bad("no fortran_order"))? == "True";
    let shape_str = dict_value(header, "shape").ok_or_else(|| bad("no shape"))?;
    let shape: Vec<usize> = shape_str
        .trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    let (rows, cols) = match shape.as_slice() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => return Err(bad("only 1-D and 2-D arrays are supported")),
    };
    let (width, conv): (usize, fn(&[u8]) -> f64) = match descr {
        "<f8" => (8, |b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
        "<f4" => (4, |b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))),
        "<i8" => (8, |b| i64::from_le_bytes(b.try_into().expect("8 bytes")) as f64),
        "<i4" => (4, |b| f64::from(i32::from_le_bytes(b.try_into().expect("4 bytes")))),
        "|u1" | "|b1" => (1, |b| f64::from(b[0])),
        other => return Err(bad(&format!("unsupported dtype {other}"))),
    };
    let body = &bytes[start + header_len..];
    let n = rows * cols;
    if body.len() < n * width {
        return Err(bad("truncated data"));
    }
    let flat: Vec<f64> = body.chunks_exact(width).take(n).map(conv).collect();
    let data = if fortran && cols > 1 {
        (0..n).map(|idx| flat[(idx % cols) * rows + idx / cols]).collect()
    } else {
        flat
    };
    Ok(NpyArray { rows, cols, data })
}

fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pos = header.find(&format!("'{key}'"))?;
    let rest = header[pos + key.len() + 2..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}'])?
    };
    Some(rest[..end].trim())
}
