//! Superpixel segmentation and segment-filtered images.
//!
//! The built-in segmenter is a SLIC-style k-means over joint
//! (RGB color, scaled position) features: deterministic seeds on a regular
//! grid, a fixed number of assignment/update rounds, and a connectivity
//! pass that merges stranded fragments into their largest neighbor.
//! Externally produced segment maps are equally valid inputs everywhere;
//! nothing downstream depends on how a map was made.
//!
//! A [`FilteredImage`] replaces every pixel with the mean color of its
//! segment. Colors stay real-valued in memory and are only quantized when
//! exported as PPM.

use crate::error::{Error, Result};
use crate::imaging::{Image, SegmentMap};

/// Parameters for [`slic_segment`].
#[derive(Debug, Clone, Copy)]
pub struct SlicParams {
    /// Target number of superpixels. The realized count can differ slightly
    /// after seeding rounds to a grid and empty segments are dropped.
    pub target_segments: usize,
    /// Compactness: larger values weigh position more, giving squarer
    /// segments. In color-distance units per grid step.
    pub compactness: f64,
    pub max_iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams { target_segments: 64, compactness: 10.0, max_iterations: 10 }
    }
}

#[derive(Clone)]
struct Cluster {
    color: [f64; 3],
    x: f64,
    y: f64,
}

/// Segments an image into superpixels. Deterministic: fixed grid seeding,
/// fixed iteration count, distance ties resolved to the lowest segment id.
pub fn slic_segment(img: &Image, params: &SlicParams) -> Result<SegmentMap> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let k = params.target_segments;
    if k == 0 {
        return Err(Error::Invalid("target_segments must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Invalid(format!("target_segments {k} exceeds pixel count {n}")));
    }

    // Seed grid: step S = sqrt(N/K), axis counts rounded to cover the image.
    let step = ((n as f64) / (k as f64)).sqrt();
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let mut clusters = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let cx = (gx as f64 + 0.5) * w as f64 / nx as f64;
            let cy = (gy as f64 + 0.5) * h as f64 / ny as f64;
            let px = (cx as usize).min(w - 1);
            let py = (cy as usize).min(h - 1);
            clusters.push(Cluster { color: img.color(py * w + px), x: cx, y: cy });
        }
    }

    // Position weight: compactness m over grid step S, per standard SLIC.
    let spatial_scale = params.compactness / step;
    let search = (2.0 * step).ceil() as isize;

    let mut assignment = vec![0u32; n];
    for _ in 0..params.max_iterations.max(1) {
        // Assignment: each pixel takes the nearest cluster within the
        // search window; ties go to the lowest cluster index.
        let mut best = vec![(f64::INFINITY, u32::MAX); n];
        for (ci, c) in clusters.iter().enumerate() {
            let x0 = ((c.x as isize) - search).max(0) as usize;
            let x1 = (((c.x as isize) + search) as usize).min(w - 1);
            let y0 = ((c.y as isize) - search).max(0) as usize;
            let y1 = (((c.y as isize) + search) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let col = img.color(i);
                    let dc = (col[0] - c.color[0]).powi(2)
                        + (col[1] - c.color[1]).powi(2)
                        + (col[2] - c.color[2]).powi(2);
                    let dx = x as f64 + 0.5 - c.x;
                    let dy = y as f64 + 0.5 - c.y;
                    let d = dc + (dx * dx + dy * dy) * spatial_scale * spatial_scale;
                    if d < best[i].0 || (d == best[i].0 && (ci as u32) < best[i].1) {
                        best[i] = (d, ci as u32);
                    }
                }
            }
        }
        // Any pixel outside every search window falls back to the nearest
        // cluster center by scaled distance over all clusters.
        for i in 0..n {
            if best[i].1 == u32::MAX {
                let col = img.color(i);
                let (x, y) = (i % w, i / w);
                for (ci, c) in clusters.iter().enumerate() {
                    let dc = (col[0] - c.color[0]).powi(2)
                        + (col[1] - c.color[1]).powi(2)
                        + (col[2] - c.color[2]).powi(2);
                    let dx = x as f64 + 0.5 - c.x;
                    let dy = y as f64 + 0.5 - c.y;
                    let d = dc + (dx * dx + dy * dy) * spatial_scale * spatial_scale;
                    if d < best[i].0 || (d == best[i].0 && (ci as u32) < best[i].1) {
                        best[i] = (d, ci as u32);
                    }
                }
            }
            assignment[i] = best[i].1;
        }

        // Update: move each cluster to the mean of its members.
        let mut sums = vec![[0.0f64; 5]; clusters.len()];
        let mut counts = vec![0usize; clusters.len()];
        for i in 0..n {
            let ci = assignment[i] as usize;
            let col = img.color(i);
            sums[ci][0] += col[0];
            sums[ci][1] += col[1];
            sums[ci][2] += col[2];
            sums[ci][3] += (i % w) as f64 + 0.5;
            sums[ci][4] += (i / w) as f64 + 0.5;
            counts[ci] += 1;
        }
        for (ci, c) in clusters.iter_mut().enumerate() {
            if counts[ci] > 0 {
                let inv = 1.0 / counts[ci] as f64;
                c.color = [sums[ci][0] * inv, sums[ci][1] * inv, sums[ci][2] * inv];
                c.x = sums[ci][3] * inv;
                c.y = sums[ci][4] * inv;
            }
        }
    }

    enforce_connectivity(w, h, &mut assignment);
    SegmentMap::relabel(w, h, &assignment)
}

/// Merges every 4-connected fragment that is not its label's largest
/// component into the adjacent label with the most pixels (ties to the
/// lowest label). Leaves each surviving segment contiguous and non-empty.
fn enforce_connectivity(w: usize, h: usize, assignment: &mut [u32]) {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_pixels: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let label = assignment[start];
        comp_label.push(label);
        let mut pixels = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && assignment[j] == label {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comp_pixels.push(pixels);
    }

    // Largest component per label keeps it; scan order breaks size ties.
    let mut label_counts = std::collections::HashMap::new();
    for &l in assignment.iter() {
        *label_counts.entry(l).or_insert(0usize) += 1;
    }
    let mut main_comp = std::collections::HashMap::new();
    for (id, pixels) in comp_pixels.iter().enumerate() {
        let entry = main_comp.entry(comp_label[id]).or_insert(id);
        if comp_pixels[*entry].len() < pixels.len() {
            *entry = id;
        }
    }

    for (id, pixels) in comp_pixels.iter().enumerate() {
        let label = comp_label[id];
        if main_comp[&label] == id {
            continue;
        }
        // Orphan fragment: adopt the adjacent label backing the most pixels.
        let mut best: Option<u32> = None;
        for &i in pixels {
            let (x, y) = (i % w, i / w);
            let mut consider = |j: usize| {
                let l = assignment[j];
                if l == label {
                    return;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (cb, cl) = (label_counts[&b], label_counts[&l]);
                        cl > cb || (cl == cb && l < b)
                    }
                };
                if better {
                    best = Some(l);
                }
            };
            if x > 0 {
                consider(i - 1);
            }
            if x + 1 < w {
                consider(i + 1);
            }
            if y > 0 {
                consider(i - w);
            }
            if y + 1 < h {
                consider(i + w);
            }
        }
        if let Some(target) = best {
            for &i in pixels {
                assignment[i] = target;
            }
        }
    }
}

/// An image whose pixels carry the mean color of their segment, paired
/// with the segment map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredImage {
    image: Image,
    segments: SegmentMap,
}

impl FilteredImage {
    /// Wraps an already-filtered image. Every segment must be constant in
    /// color; mean consistency against a source is not rechecked, so maps
    /// filtered by external tools can be ingested as-is.
    pub fn from_parts(image: Image, segments: SegmentMap) -> Result<Self> {
        if !image.same_dimensions(segments.width(), segments.height()) {
            return Err(Error::Dimension(format!(
                "image {}x{} vs segment map {}x{}",
                image.width(),
                image.height(),
                segments.width(),
                segments.height()
            )));
        }
        let mut seen: Vec<Option<[f64; 3]>> = vec![None; segments.segment_count()];
        for i in 0..image.pixel_count() {
            let s = segments.segment(i);
            match seen[s] {
                None => seen[s] = Some(image.color(i)),
                Some(c) => {
                    if c != image.color(i) {
                        return Err(Error::Invalid(format!(
                            "segment {s} is not color-constant at pixel {i}"
                        )));
                    }
                }
            }
        }
        Ok(FilteredImage { image, segments })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn segments(&self) -> &SegmentMap {
        &self.segments
    }

    /// Mean color of pixel `i`'s segment.
    pub fn color(&self, i: usize) -> [f64; 3] {
        self.image.color(i)
    }

    /// Mean color per segment id.
    pub fn segment_colors(&self) -> Vec<[f64; 3]> {
        let mut colors = vec![[0.0; 3]; self.segments.segment_count()];
        let mut seen = vec![false; self.segments.segment_count()];
        for i in 0..self.image.pixel_count() {
            let s = self.segments.segment(i);
            if !seen[s] {
                seen[s] = true;
                colors[s] = self.image.color(i);
            }
        }
        colors
    }
}

/// Replaces every pixel with its segment's mean color.
pub fn segment_filter(img: &Image, seg: &SegmentMap) -> Result<FilteredImage> {
    if !img.same_dimensions(seg.width(), seg.height()) {
        return Err(Error::Dimension(format!(
            "image {}x{} vs segment map {}x{}",
            img.width(),
            img.height(),
            seg.width(),
            seg.height()
        )));
    }
    let s_count = seg.segment_count();
    let mut sums = vec![[0.0f64; 3]; s_count];
    let mut counts = vec![0usize; s_count];
    for i in 0..img.pixel_count() {
        let s = seg.segment(i);
        let c = img.color(i);
        sums[s][0] += c[0];
        sums[s][1] += c[1];
        sums[s][2] += c[2];
        counts[s] += 1;
    }
    let means: Vec<[f64; 3]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let inv = 1.0 / c as f64;
            [s[0] * inv, s[1] * inv, s[2] * inv]
        })
        .collect();
    let pixels = (0..img.pixel_count()).map(|i| means[seg.segment(i)]).collect();
    let image = Image::new(img.width(), img.height(), pixels)?;
    Ok(FilteredImage { image, segments: seg.clone() })
}

/// Splits an edge list into (intra, extra) by whether both endpoints share
/// a segment. The two lists partition the input exactly.
pub fn segment_edge_partition(
    seg: &SegmentMap,
    edges: &[(usize, usize)],
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let n = seg.indices().len();
    let mut intra = Vec::new();
    let mut extra = Vec::new();
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::Invalid(format!("edge ({i}, {j}) out of range for {n} pixels")));
        }
        if seg.segment(i) == seg.segment(j) {
            intra.push((i, j));
        } else {
            extra.push((i, j));
        }
    }
    Ok((intra, extra))
}
