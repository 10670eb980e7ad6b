//! Readers and writers for the two tool-specific binary formats.
//!
//! `SPSEG1` carries segment maps: an ASCII magic line, an ASCII
//! `<width> <height>` line, then row-major little-endian u32 indices.
//! `SPUNR1` carries unary fields: magic line, `<width> <height> <labels>`
//! line, then little-endian f32 values, pixel-major. Segment maps may also
//! arrive as plain CSV grids of integers, which is convenient for fixtures.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{SegmentMap, UnaryField};

const SPSEG_MAGIC: &[u8] = b"SPSEG1\n";
const SPUNR_MAGIC: &[u8] = b"SPUNR1\n";

/// Reads the ASCII dimension line that follows a magic line. Returns the
/// parsed fields and the offset of the byte after the newline.
fn parse_dim_line(
    data: &[u8],
    start: usize,
    n_fields: usize,
    format: &'static str,
) -> Result<(Vec<usize>, usize)> {
    let line_end = data[start..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(format, "missing dimension line"))?;
    let line = std::str::from_utf8(&data[start..start + line_end])
        .map_err(|_| Error::format(format, "dimension line is not ASCII"))?;
    let fields: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(format, format!("bad dimension field {t:?}"))))
        .collect::<Result<_>>()?;
    if fields.len() != n_fields {
        return Err(Error::format(
            format,
            format!("expected {n_fields} dimension fields, got {}", fields.len()),
        ));
    }
    if fields.iter().any(|&f| f == 0) {
        return Err(Error::format(format, format!("zero dimension in {line:?}")));
    }
    Ok((fields, start + line_end + 1))
}

/// Reads a segment map from either `SPSEG1` or a CSV grid of integers,
/// relabeling indices to contiguous ids in first-occurrence order.
pub fn read_segment_map(path: impl AsRef<Path>) -> Result<SegmentMap> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.starts_with(SPSEG_MAGIC) {
        read_spseg(&data)
    } else {
        read_segment_csv(&data)
    }
}

fn read_spseg(data: &[u8]) -> Result<SegmentMap> {
    let (dims, offset) = parse_dim_line(data, SPSEG_MAGIC.len(), 2, "SPSEG1")?;
    let (w, h) = (dims[0], dims[1]);
    let needed = w * h * 4;
    let payload = &data[offset..];
    if payload.len() < needed {
        return Err(Error::format(
            "SPSEG1",
            format!("truncated payload: expected {needed} bytes, found {}", payload.len()),
        ));
    }
    let raw: Vec<u32> = payload[..needed]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    SegmentMap::relabel(w, h, &raw)
}

fn read_segment_csv(data: &[u8]) -> Result<SegmentMap> {
    let text = std::str::from_utf8(data).map_err(|_| Error::format("CSV", "not valid UTF-8"))?;
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                let v: i64 = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::format("CSV", format!("bad index {t:?} on line {}", lineno + 1)))?;
                if v < 0 {
                    return Err(Error::format(
                        "CSV",
                        format!("negative segment index {v} on line {}", lineno + 1),
                    ));
                }
                Ok(v as u32)
            })
            .collect::<Result<Vec<u32>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format("CSV", "no rows"));
    }
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::format("CSV", "ragged rows"));
    }
    let h = rows.len();
    let raw: Vec<u32> = rows.into_iter().flatten().collect();
    SegmentMap::relabel(w, h, &raw)
}

/// Writes a segment map in `SPSEG1`.
pub fn write_segment_map(map: &SegmentMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(map.indices().len() * 4 + 32);
    out.extend_from_slice(SPSEG_MAGIC);
    out.extend_from_slice(format!("{} {}\n", map.width(), map.height()).as_bytes());
    for &s in map.indices() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a unary field from `SPUNR1`. Values must be finite.
pub fn read_unary(path: impl AsRef<Path>) -> Result<UnaryField> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !data.starts_with(SPUNR_MAGIC) {
        return Err(Error::format("SPUNR1", "missing SPUNR1 magic"));
    }
    let (dims, offset) = parse_dim_line(&data, SPUNR_MAGIC.len(), 3, "SPUNR1")?;
    let (w, h, l) = (dims[0], dims[1], dims[2]);
    let needed = w * h * l * 4;
    let payload = &data[offset..];
    if payload.len() < needed {
        return Err(Error::format(
            "SPUNR1",
            format!(
                "payload does not match header {w}x{h}x{l}: expected {needed} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let values: Vec<f64> = payload[..needed]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format("SPUNR1", format!("non-finite value at index {i}")));
    }
    UnaryField::new(w, h, l, values)
}

/// Writes a unary field in `SPUNR1` at 32-bit float precision.
pub fn write_unary(u: &UnaryField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(u.values().len() * 4 + 32);
    out.extend_from_slice(SPUNR_MAGIC);
    out.extend_from_slice(
        format!("{} {} {}\n", u.width(), u.height(), u.label_count()).as_bytes(),
    );
    for &v in u.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
