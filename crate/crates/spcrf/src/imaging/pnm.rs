//! Binary netpbm readers and writers: PPM (P6) for images, PGM (P5) for
//! label maps. Label maps use 8-bit samples when they fit and 16-bit
//! big-endian samples otherwise, following the PGM maxval convention.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{Image, LabelMap};

/// Parses the ASCII header of a P5/P6 file: magic, width, height, maxval.
/// Returns the header fields and the offset of the first payload byte.
fn parse_pnm_header(
    data: &[u8],
    magic: &[u8; 2],
    format: &'static str,
) -> Result<(usize, usize, u32, usize)> {
    if data.len() < 2 || &data[..2] != magic {
        return Err(Error::format(
            format,
            format!("missing {} magic", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (k, field) in ["width", "height", "maxval"].iter().enumerate() {
        // Skip whitespace and '#' comments between tokens.
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(format, format!("header ends before {field}"))),
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::format(format, format!("invalid {field}: not a number")));
        }
        let text = std::str::from_utf8(&data[start..pos]).expect("digits are utf8");
        fields[k] = text
            .parse()
            .map_err(|_| Error::format(format, format!("invalid {field}: {text}")))?;
    }
    // Exactly one whitespace byte separates the maxval from the payload.
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(format, "missing whitespace after maxval")),
    }
    let (w, h) = (fields[0] as usize, fields[1] as usize);
    if w == 0 || h == 0 {
        return Err(Error::format(format, format!("degenerate dimensions {w}x{h}")));
    }
    Ok((w, h, fields[2] as u32, pos))
}

/// Reads a binary PPM (P6, maxval 255) into an [`Image`].
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, maxval, offset) = parse_pnm_header(&data, b"P6", "PPM")?;
    if maxval != 255 {
        return Err(Error::format("PPM", format!("maxval must be 255, got {maxval}")));
    }
    let needed = w * h * 3;
    let payload = &data[offset..];
    if payload.len() < needed {
        return Err(Error::format(
            "PPM",
            format!("truncated payload: expected {needed} bytes, found {}", payload.len()),
        ));
    }
    let pixels = payload[..needed]
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    Image::new(w, h, pixels)
}

/// Writes an [`Image`] as binary PPM (P6, maxval 255). Channels are rounded
/// half-up to the nearest integer.
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(img.pixel_count() * 3 + 32);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    for px in img.pixels() {
        for &c in px {
            out.push(c.round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM (P5) label map. Sample width follows the maxval:
/// one byte up to 255, two big-endian bytes above. When `label_count` is
/// given, every label must be strictly below it.
pub fn read_label_map(path: impl AsRef<Path>, label_count: Option<usize>) -> Result<LabelMap> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, maxval, offset) = parse_pnm_header(&data, b"P5", "PGM")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PGM", format!("maxval out of range: {maxval}")));
    }
    let wide = maxval > 255;
    let needed = w * h * if wide { 2 } else { 1 };
    let payload = &data[offset..];
    if payload.len() < needed {
        return Err(Error::format(
            "PGM",
            format!("truncated payload: expected {needed} bytes, found {}", payload.len()),
        ));
    }
    let labels: Vec<u32> = if wide {
        payload[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    } else {
        payload[..needed].iter().map(|&b| b as u32).collect()
    };
    if let Some(count) = label_count {
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= count) {
            return Err(Error::format(
                "PGM",
                format!("label {bad} out of range for {count} labels"),
            ));
        }
    }
    LabelMap::new(w, h, labels)
}

/// Writes a label map as binary PGM (P5). When `label_count` is given,
/// 8-bit samples are used for `label_count <= 256`, 16-bit big-endian
/// otherwise; without it the width is chosen from the largest label.
pub fn write_label_map(
    lm: &LabelMap,
    path: impl AsRef<Path>,
    label_count: Option<usize>,
) -> Result<()> {
    let path = path.as_ref();
    let max_label = lm.labels().iter().copied().max().unwrap_or(0);
    let wide = match label_count {
        Some(count) => {
            if max_label as usize >= count {
                return Err(Error::Invalid(format!(
                    "label {max_label} out of range for {count} labels"
                )));
            }
            count > 256
        }
        None => max_label > 255,
    };
    if max_label > 65535 {
        return Err(Error::Invalid(format!("label {max_label} exceeds 16-bit PGM range")));
    }
    let maxval: u32 = if wide { 65535 } else { 255 };
    let mut out = Vec::with_capacity(lm.pixel_count() * 2 + 32);
    write!(out, "P5\n{} {}\n{maxval}\n", lm.width(), lm.height()).expect("vec write");
    for &l in lm.labels() {
        if wide {
            out.extend_from_slice(&(l as u16).to_be_bytes());
        } else {
            out.push(l as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
