//! Minimal NPY v1.0 codec for 2-D little-endian float32 arrays.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGN: usize = 64;

/// Encodes a `(height, width)` C-order `<f4` array. The header is padded with
/// spaces so the data section starts on a 64-byte boundary, as numpy does.
pub fn encode_npy(height: u32, width: u32, values: &[f32]) -> Vec<u8> {
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({height}, {width}), }}");
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header_len + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes an NPY v1.0 file holding a 2-D `<f4` C-order array.
/// Returns `(height, width, values)`.
pub fn decode_npy(bytes: &[u8], origin: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let malformed = |message: String| Error::MalformedNpy {
        path: origin.to_path_buf(),
        message,
    };
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(malformed("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(malformed(format!("unsupported version {major}.{minor} (expected 1.0)")));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE_LEN + header_len;
    if bytes.len() < data_start {
        return Err(malformed("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..data_start])
        .map_err(|_| malformed("header is not ASCII".into()))?;
    let fields = parse_header(header).map_err(malformed)?;

    if fields.descr != "<f4" {
        return Err(malformed(format!(
            "unsupported dtype '{}' (expected '<f4')",
            fields.descr
        )));
    }
    if fields.fortran_order {
        return Err(malformed("fortran_order arrays are not supported".into()));
    }
    if fields.shape.len() != 2 {
        return Err(malformed(format!(
            "wrong shape rank {} (expected 2: (height, width))",
            fields.shape.len()
        )));
    }
    let (height, width) = (fields.shape[0], fields.shape[1]);
    if height == 0 || width == 0 {
        return Err(Error::ZeroDimension {
            width: width as u32,
            height: height as u32,
        });
    }
    let to_u32 = |v: u64| u32::try_from(v).map_err(|_| malformed(format!("dimension {v} too large")));
    let (height, width) = (to_u32(height)?, to_u32(width)?);

    let count = height as usize * width as usize;
    let data = &bytes[data_start..];
    if data.len() != count * 4 {
        return Err(malformed(format!(
            "data section has {} bytes, shape requires {}",
            data.len(),
            count * 4
        )));
    }
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((height, width, values))
}

struct HeaderFields {
    descr: String,
    fortran_order: bool,
    shape: Vec<u64>,
}

/// Parses the Python dict literal of an NPY header, e.g.
/// `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.
fn parse_header(header: &str) -> std::result::Result<HeaderFields, String> {
    let body = header.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| "header is not a dict literal".to_string())?;

    let mut descr = None;
    let mut fortran_order = None;
    let mut shape = None;

    for entry in split_top_level(body) {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let (key, value) = entry
            .split_once(':')
            .ok_or_else(|| format!("bad header entry `{entry}`"))?;
        let key = unquote(key.trim()).ok_or_else(|| format!("bad header key `{key}`"))?;
        let value = value.trim();
        match key {
            "descr" => {
                descr = Some(
                    unquote(value)
                        .ok_or_else(|| format!("bad descr `{value}`"))?
                        .to_string(),
                )
            }
            "fortran_order" => {
                fortran_order = Some(match value {
                    "False" => false,
                    "True" => true,
                    other => return Err(format!("bad fortran_order `{other}`")),
                })
            }
            "shape" => {
                let inner = value
                    .strip_prefix('(')
                    .and_then(|v| v.strip_suffix(')'))
                    .ok_or_else(|| format!("bad shape `{value}`"))?;
                let dims = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<u64>().map_err(|_| format!("bad shape dimension `{s}`")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                shape = Some(dims);
            }
            other => return Err(format!("unexpected header key `{other}`")),
        }
    }

    Ok(HeaderFields {
        descr: descr.ok_or("header lacks 'descr'")?,
        fortran_order: fortran_order.ok_or("header lacks 'fortran_order'")?,
        shape: shape.ok_or("header lacks 'shape'")?,
    })
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn unquote(s: &str) -> Option<&str> {
    s.strip_prefix('\'')
        .and_then(|s| s.strip_suffix('\''))
        .or_else(|| s.strip_prefix('"').and_then(|s| s.strip_suffix('"')))
}
