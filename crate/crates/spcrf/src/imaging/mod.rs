//! Core raster types and their on-disk formats.
//!
//! Four kinds of data move between tools: RGB images (binary PPM), label
//! maps (binary PGM), superpixel segment maps (`SPSEG1` or CSV) and unary
//! potential fields (`SPUNR1`). All types validate their invariants on
//! construction and are immutable afterwards, so they are safe to share
//! across threads.

mod pnm;
mod raw;

pub use pnm::{read_image, read_label_map, write_image, write_label_map};
pub use raw::{read_segment_map, read_unary, write_segment_map, write_unary};

use crate::error::{Error, Result};

/// An RGB raster. Channel values are reals in `[0, 255]`; fractional values
/// arise from segment-mean filtering and are only quantized on PPM export.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        for (i, px) in pixels.iter().enumerate() {
            for (c, &v) in px.iter().enumerate() {
                if !(0.0..=255.0).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "channel {c} of pixel {i} out of range [0, 255]: {v}"
                    )));
                }
            }
        }
        Ok(Image { width, height, pixels })
    }

    /// Constant-color image.
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Image::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    /// Color of pixel `i` in row-major order.
    pub fn color(&self, i: usize) -> [f64; 3] {
        self.pixels[i]
    }

    /// Position vector of pixel `i` as `(x, y)`.
    pub fn position(&self, i: usize) -> (f64, f64) {
        ((i % self.width) as f64, (i / self.width) as f64)
    }

    pub fn same_dimensions(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Per-pixel superpixel indices, relabeled to contiguous ids `0..segment_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    width: usize,
    height: usize,
    indices: Vec<u32>,
    segment_count: usize,
}

impl SegmentMap {
    /// Builds a map from already-contiguous indices. Fails if any id in
    /// `0..max+1` is absent; use [`SegmentMap::relabel`] for raw indices.
    pub fn new(width: usize, height: usize, indices: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "segment map dimensions must be positive, got {width}x{height}"
            )));
        }
        if indices.len() != width * height {
            return Err(Error::Dimension(format!(
                "index count {} does not match {width}x{height}",
                indices.len()
            )));
        }
        let count = *indices.iter().max().expect("non-empty") as usize + 1;
        let mut seen = vec![false; count];
        for &s in &indices {
            seen[s as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Invalid(format!(
                "segment ids are not contiguous: id {missing} never occurs"
            )));
        }
        Ok(SegmentMap { width, height, indices, segment_count: count })
    }

    /// Relabels arbitrary non-negative indices to contiguous ids in
    /// first-occurrence scan order, preserving equivalence classes.
    pub fn relabel(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "segment map dimensions must be positive, got {width}x{height}"
            )));
        }
        if raw.len() != width * height {
            return Err(Error::Dimension(format!(
                "index count {} does not match {width}x{height}",
                raw.len()
            )));
        }
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        let indices = raw
            .iter()
            .map(|&v| {
                *remap.entry(v).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                })
            })
            .collect();
        Ok(SegmentMap { width, height, indices, segment_count: next as usize })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Segment id of pixel `i`.
    pub fn segment(&self, i: usize) -> usize {
        self.indices[i] as usize
    }

    /// Pixel count per segment.
    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.segment_count];
        for &s in &self.indices {
            sizes[s as usize] += 1;
        }
        sizes
    }
}

/// Per-pixel, per-label unary potentials (negative log-probabilities),
/// stored pixel-major: `L` contiguous values per pixel, pixels row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    width: usize,
    height: usize,
    labels: usize,
    values: Vec<f64>,
}

impl UnaryField {
    pub fn new(width: usize, height: usize, labels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || labels == 0 {
            return Err(Error::Dimension(format!(
                "unary field shape must be positive, got {width}x{height}x{labels}"
            )));
        }
        if values.len() != width * height * labels {
            return Err(Error::Dimension(format!(
                "value count {} does not match {width}x{height}x{labels}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite unary value at index {i}")));
        }
        Ok(UnaryField { width, height, labels, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Potential of assigning label `l` to pixel `i`.
    pub fn potential(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.labels + l]
    }

    /// The `L` potentials of pixel `i`.
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * self.labels..(i + 1) * self.labels]
    }
}

/// A per-pixel label assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "label map dimensions must be positive, got {width}x{height}"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "label count {} does not match {width}x{height}",
                labels.len()
            )));
        }
        Ok(LabelMap { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }
}
