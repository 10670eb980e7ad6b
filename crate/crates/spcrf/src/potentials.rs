//! Potential functions and Gibbs energy.
//!
//! The energy of a labeling `x` over an image `D` with segment-filtered
//! views `D_1..D_H` is
//!
//! ```text
//! E(x) = sum_i  u_i(x_i)
//!      + sum_{i<j} mu(x_i, x_j) * [ w1 * k_app(i, j) + w2 * k_smooth(i, j) ]
//!      + sum_h sum_{i<j} mu(x_i, x_j) * w_sp_h * k_sp_h(i, j)
//! ```
//!
//! where `k_app` is a joint position/color Gaussian on the original image,
//! `k_smooth` a position-only Gaussian, and `k_sp_h` a position/color
//! Gaussian whose colors come from the segment-filtered image of level `h`.
//! The edge set is fully connected. Weights are applied exactly once.
//!
//! The superpixel levels reuse the pairwise parameters: the color bandwidth
//! of `k_sp` is the pairwise `theta_beta` (structurally, there is no
//! separate field), and level weights are conventionally `r * w1` with
//! `r` in `(0, 1]`, built by [`SpLevel::shared`].
//!
//! Weights come in scalar form (Potts-style models) or as full `L x L`
//! matrices (models whose weights were trained jointly with a CNN). In
//! matrix form the effective pairwise coefficient for a label pair is the
//! elementwise product `mu(l, l') * w(l, l')`; scalar form is the constant
//! special case. [`CrfConfig::combined_matrices`] folds both.

use crate::error::{Error, Result};
use crate::imaging::{Image, LabelMap, UnaryField};
use crate::parallel::sum_indexed;
use crate::superpixel::FilteredImage;

/// Squared Euclidean distance between two RGB triples.
#[inline]
pub(crate) fn color_dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Squared distance between pixel positions `i` and `j` on a `width`-wide grid.
#[inline]
pub(crate) fn position_dist2(width: usize, i: usize, j: usize) -> f64 {
    let (xi, yi) = ((i % width) as f64, (i / width) as f64);
    let (xj, yj) = ((j % width) as f64, (j / width) as f64);
    let dx = xi - xj;
    let dy = yi - yj;
    dx * dx + dy * dy
}

/// A square matrix over the label space, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    labels: usize,
    values: Vec<f64>,
}

impl LabelMatrix {
    pub fn new(labels: usize, values: Vec<f64>) -> Result<Self> {
        if labels == 0 || values.len() != labels * labels {
            return Err(Error::Dimension(format!(
                "label matrix needs {labels}x{labels} entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("label matrix entries must be finite".into()));
        }
        Ok(LabelMatrix { labels, values })
    }

    pub fn constant(labels: usize, value: f64) -> Self {
        LabelMatrix { labels, values: vec![value; labels * labels] }
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    #[inline]
    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.values[l * self.labels + m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> LabelMatrix {
        LabelMatrix {
            labels: self.labels,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Label compatibility `mu(l, l')`: non-negative, zero meaning "no penalty".
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix {
    matrix: LabelMatrix,
}

impl CompatibilityMatrix {
    /// Potts compatibility: 1 on disagreement, 0 on the diagonal.
    pub fn potts(labels: usize) -> Self {
        let mut values = vec![1.0; labels * labels];
        for l in 0..labels {
            values[l * labels + l] = 0.0;
        }
        CompatibilityMatrix { matrix: LabelMatrix { labels, values } }
    }

    /// General non-negative compatibility.
    pub fn general(matrix: LabelMatrix) -> Result<Self> {
        if matrix.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Invalid("compatibility entries must be non-negative".into()));
        }
        Ok(CompatibilityMatrix { matrix })
    }

    pub fn label_count(&self) -> usize {
        self.matrix.labels
    }

    #[inline]
    pub fn mu(&self, l: usize, m: usize) -> f64 {
        self.matrix.get(l, m)
    }
}

/// A kernel weight: one scalar for the whole label space, or per label pair.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelWeight {
    Scalar(f64),
    Matrix(LabelMatrix),
}

impl KernelWeight {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            KernelWeight::Scalar(w) => Some(*w),
            KernelWeight::Matrix(_) => None,
        }
    }

    /// The weight scaled by a ratio, preserving form.
    pub fn scaled(&self, factor: f64) -> KernelWeight {
        match self {
            KernelWeight::Scalar(w) => KernelWeight::Scalar(w * factor),
            KernelWeight::Matrix(m) => KernelWeight::Matrix(m.scaled(factor)),
        }
    }

    /// Elementwise fold with the compatibility: `mu(l,l') * w[(l,l')]`.
    pub fn combined(&self, mu: &CompatibilityMatrix) -> Result<LabelMatrix> {
        let labels = mu.label_count();
        match self {
            KernelWeight::Scalar(w) => {
                if *w < 0.0 || !w.is_finite() {
                    return Err(Error::Invalid(format!("kernel weight must be non-negative, got {w}")));
                }
                Ok(mu.matrix.scaled(*w))
            }
            KernelWeight::Matrix(m) => {
                if m.labels != labels {
                    return Err(Error::Dimension(format!(
                        "weight matrix is {}x{} but compatibility is {labels}x{labels}",
                        m.labels, m.labels
                    )));
                }
                if m.values.iter().any(|&v| v < 0.0) {
                    return Err(Error::Invalid("weight matrix entries must be non-negative".into()));
                }
                let values = m
                    .values
                    .iter()
                    .zip(&mu.matrix.values)
                    .map(|(w, c)| w * c)
                    .collect();
                Ok(LabelMatrix { labels, values })
            }
        }
    }
}

/// Bandwidths and weights of the two-kernel contrast-sensitive pairwise
/// potential: an appearance kernel over position and color, and a
/// smoothness kernel over position alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseKernelConfig {
    /// Spatial stddev of the appearance kernel, in pixels.
    pub theta_alpha: f64,
    /// Color stddev of the appearance kernel, in channel units.
    pub theta_beta: f64,
    /// Spatial stddev of the smoothness kernel, in pixels.
    pub theta_gamma: f64,
    pub appearance_weight: KernelWeight,
    pub smoothness_weight: KernelWeight,
}

impl PairwiseKernelConfig {
    /// Scalar-weight config with the published bandwidth defaults
    /// (`theta_alpha` 160, `theta_beta` 3, `theta_gamma` 3).
    pub fn scalar(w_appearance: f64, w_smoothness: f64) -> Self {
        PairwiseKernelConfig {
            theta_alpha: 160.0,
            theta_beta: 3.0,
            theta_gamma: 3.0,
            appearance_weight: KernelWeight::Scalar(w_appearance),
            smoothness_weight: KernelWeight::Scalar(w_smoothness),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta_alpha", self.theta_alpha),
            ("theta_beta", self.theta_beta),
            ("theta_gamma", self.theta_gamma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn appearance_unit(&self, img: &Image, i: usize, j: usize) -> f64 {
        let sp = position_dist2(img.width(), i, j) / (2.0 * self.theta_alpha * self.theta_alpha);
        let col = color_dist2(img.color(i), img.color(j)) / (2.0 * self.theta_beta * self.theta_beta);
        (-sp - col).exp()
    }

    #[inline]
    pub(crate) fn smoothness_unit(&self, width: usize, i: usize, j: usize) -> f64 {
        let sp = position_dist2(width, i, j) / (2.0 * self.theta_gamma * self.theta_gamma);
        (-sp).exp()
    }
}

/// Two-kernel pairwise kernel value `w1*k_app + w2*k_smooth` for a pixel
/// pair, scalar-weight form. Symmetric in `(i, j)`; `w1 + w2` at `i == j`.
pub fn pairwise_kernel(img: &Image, i: usize, j: usize, cfg: &PairwiseKernelConfig) -> f64 {
    let w1 = cfg.appearance_weight.scalar().expect("scalar-weight mode");
    let w2 = cfg.smoothness_weight.scalar().expect("scalar-weight mode");
    w1 * cfg.appearance_unit(img, i, j) + w2 * cfg.smoothness_unit(img.width(), i, j)
}

/// Weight-sharing parameters of the superpixel levels: one spatial
/// bandwidth and one weight ratio cover every level, and the color
/// bandwidth is the pairwise `theta_beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpLevelParams {
    /// Spatial stddev of the superpixel kernel, in pixels.
    pub theta_alpha_s: f64,
    /// Weight ratio in `(0, 1]`: level weight is `ratio * w1`.
    pub weight_ratio: f64,
}

impl Default for SpLevelParams {
    fn default() -> Self {
        // Published grid-search optimum.
        SpLevelParams { theta_alpha_s: 30.0, weight_ratio: 0.5 }
    }
}

impl SpLevelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_alpha_s > 0.0) || !self.theta_alpha_s.is_finite() {
            return Err(Error::Invalid(format!(
                "theta_alpha_s must be strictly positive, got {}",
                self.theta_alpha_s
            )));
        }
        if !(self.weight_ratio > 0.0 && self.weight_ratio <= 1.0) {
            return Err(Error::Invalid(format!(
                "weight ratio must be in (0, 1], got {}",
                self.weight_ratio
            )));
        }
        Ok(())
    }
}

/// One superpixel level: a segment-filtered image plus its kernel shape
/// and effective weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SpLevel {
    pub filtered: FilteredImage,
    pub theta_alpha_s: f64,
    /// Effective level weight. [`SpLevel::shared`] derives it as
    /// `ratio * w1` from the pairwise appearance weight.
    pub weight: KernelWeight,
}

impl SpLevel {
    /// Builds a level under the parameter-sharing convention.
    pub fn shared(
        filtered: FilteredImage,
        params: SpLevelParams,
        base: &PairwiseKernelConfig,
    ) -> Result<Self> {
        params.validate()?;
        Ok(SpLevel {
            filtered,
            theta_alpha_s: params.theta_alpha_s,
            weight: base.appearance_weight.scaled(params.weight_ratio),
        })
    }

    #[inline]
    pub(crate) fn unit(&self, theta_beta: f64, i: usize, j: usize) -> f64 {
        let img = self.filtered.image();
        let sp = position_dist2(img.width(), i, j) / (2.0 * self.theta_alpha_s * self.theta_alpha_s);
        let col = color_dist2(img.color(i), img.color(j)) / (2.0 * theta_beta * theta_beta);
        (-sp - col).exp()
    }
}

/// Superpixel kernel value for a pixel pair, scalar-weight form:
/// `w_sp * exp(-spatial - color)` with colors from the filtered image.
pub fn sp_kernel(level: &SpLevel, i: usize, j: usize, base: &PairwiseKernelConfig) -> f64 {
    let w = level.weight.scalar().expect("scalar-weight mode");
    w * level.unit(base.theta_beta, i, j)
}

/// Parameters of the contrast-sensitive superpixel potential
/// `mu(x_i,x_j) * (theta_p + theta_v * exp(-theta_beta_c * |C_i - C_j|^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastSpParams {
    pub theta_p: f64,
    pub theta_v: f64,
    pub theta_beta_c: f64,
}

impl ContrastSpParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta_p < 0.0 || self.theta_v < 0.0 {
            return Err(Error::Invalid("theta_p and theta_v must be non-negative".into()));
        }
        if self.theta_p + self.theta_v <= 0.0 {
            return Err(Error::Invalid("theta_p + theta_v must be positive".into()));
        }
        if !(self.theta_beta_c > 0.0) {
            return Err(Error::Invalid("theta_beta_c must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Contrast-sensitive superpixel potential for one pixel pair under Potts
/// compatibility. Zero on agreement; `theta_p + theta_v` on disagreement
/// inside one segment (the maximum), decaying toward `theta_p` as segment
/// mean colors separate.
pub fn contrast_sp_potential(
    filtered: &FilteredImage,
    i: usize,
    j: usize,
    labels: (usize, usize),
    p: &ContrastSpParams,
) -> f64 {
    if labels.0 == labels.1 {
        return 0.0;
    }
    let d2 = color_dist2(filtered.color(i), filtered.color(j));
    p.theta_p + p.theta_v * (-p.theta_beta_c * d2).exp()
}

/// Closed form for the sum of intra-segment contrast potentials over one
/// clique: `N * (theta_p + theta_v)` for `N` label-disagreeing edges,
/// capped at `gamma_max = |c| * (theta_p + theta_v)` where `|c|` is the
/// clique's edge count.
pub fn robust_pn_closed_form(
    labels: &[u32],
    edges: &[(usize, usize)],
    p: &ContrastSpParams,
) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::Invalid("clique has no edges".into()));
    }
    let mut disagreeing = 0usize;
    for &(a, b) in edges {
        if a >= labels.len() || b >= labels.len() {
            return Err(Error::Invalid(format!(
                "edge ({a}, {b}) out of range for {} clique members",
                labels.len()
            )));
        }
        if labels[a] != labels[b] {
            disagreeing += 1;
        }
    }
    let unit = p.theta_p + p.theta_v;
    let gamma_max = edges.len() as f64 * unit;
    if disagreeing < edges.len() {
        Ok(disagreeing as f64 * unit)
    } else {
        Ok(gamma_max)
    }
}

/// Full model configuration: label space, compatibility, pairwise kernels,
/// zero or more superpixel levels, and the default iteration count.
/// `sp_levels` empty reduces the model to a plain dense pairwise CRF.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfConfig {
    pub labels: usize,
    pub compatibility: CompatibilityMatrix,
    pub pairwise: PairwiseKernelConfig,
    pub sp_levels: Vec<SpLevel>,
    pub iterations: usize,
}

impl CrfConfig {
    /// Potts model with scalar weights and default bandwidths.
    pub fn potts(labels: usize, w_appearance: f64, w_smoothness: f64) -> Self {
        CrfConfig {
            labels,
            compatibility: CompatibilityMatrix::potts(labels),
            pairwise: PairwiseKernelConfig::scalar(w_appearance, w_smoothness),
            sp_levels: Vec::new(),
            iterations: 10,
        }
    }

    pub fn level_count(&self) -> usize {
        self.sp_levels.len()
    }

    pub fn validate(&self, img: &Image) -> Result<()> {
        if self.labels == 0 {
            return Err(Error::Invalid("label count must be positive".into()));
        }
        if self.compatibility.label_count() != self.labels {
            return Err(Error::Dimension(format!(
                "compatibility is {}x{} but model has {} labels",
                self.compatibility.label_count(),
                self.compatibility.label_count(),
                self.labels
            )));
        }
        self.pairwise.validate()?;
        if self.iterations == 0 {
            return Err(Error::Invalid("iteration count must be positive".into()));
        }
        for (h, level) in self.sp_levels.iter().enumerate() {
            if !(level.theta_alpha_s > 0.0) {
                return Err(Error::Invalid(format!("level {h}: theta_alpha_s must be positive")));
            }
            let f = level.filtered.image();
            if !f.same_dimensions(img.width(), img.height()) {
                return Err(Error::Dimension(format!(
                    "level {h}: filtered image {}x{} vs image {}x{}",
                    f.width(),
                    f.height(),
                    img.width(),
                    img.height()
                )));
            }
        }
        // All levels share one spatial bandwidth and one weight.
        if let Some(first) = self.sp_levels.first() {
            for (h, level) in self.sp_levels.iter().enumerate().skip(1) {
                if level.theta_alpha_s != first.theta_alpha_s || level.weight != first.weight {
                    return Err(Error::Invalid(format!(
                        "level {h} does not share theta_alpha_s/weight with level 0"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One folded `L x L` coefficient matrix per kernel, ordered
    /// appearance, smoothness, then superpixel levels.
    pub fn combined_matrices(&self) -> Result<Vec<LabelMatrix>> {
        let mut out = Vec::with_capacity(2 + self.sp_levels.len());
        out.push(self.pairwise.appearance_weight.combined(&self.compatibility)?);
        out.push(self.pairwise.smoothness_weight.combined(&self.compatibility)?);
        for level in &self.sp_levels {
            out.push(level.weight.combined(&self.compatibility)?);
        }
        Ok(out)
    }

    /// Unit kernel values for one pixel pair, ordered as in
    /// [`CrfConfig::combined_matrices`].
    pub(crate) fn unit_kernels(&self, img: &Image, i: usize, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.push(self.pairwise.appearance_unit(img, i, j));
        out.push(self.pairwise.smoothness_unit(img.width(), i, j));
        for level in &self.sp_levels {
            out.push(level.unit(self.pairwise.theta_beta, i, j));
        }
    }
}

fn check_instance(labeling: &LabelMap, unary: &UnaryField, img: &Image, cfg: &CrfConfig) -> Result<()> {
    cfg.validate(img)?;
    if !img.same_dimensions(labeling.width(), labeling.height()) {
        return Err(Error::Dimension("labeling does not match image".into()));
    }
    if !img.same_dimensions(unary.width(), unary.height()) {
        return Err(Error::Dimension("unary field does not match image".into()));
    }
    if unary.label_count() != cfg.labels {
        return Err(Error::Dimension(format!(
            "unary has {} labels, model has {}",
            unary.label_count(),
            cfg.labels
        )));
    }
    if let Some(&bad) = labeling.labels().iter().find(|&&l| l as usize >= cfg.labels) {
        return Err(Error::Invalid(format!("label {bad} out of range")));
    }
    Ok(())
}

/// Total Gibbs energy of a labeling over the fully connected edge set.
/// Cost is quadratic in the pixel count.
pub fn gibbs_energy(
    labeling: &LabelMap,
    unary: &UnaryField,
    img: &Image,
    cfg: &CrfConfig,
) -> Result<f64> {
    let parts = energy_decomposed(labeling, unary, img, cfg)?;
    Ok(parts.total())
}

/// Per-term energy: unary, pairwise, and each superpixel level split into
/// intra-segment and extra-segment sums.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub unary: f64,
    pub pairwise: f64,
    /// Per level: (intra-segment sum, extra-segment sum).
    pub sp_levels: Vec<(f64, f64)>,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.unary + self.pairwise + self.sp_levels.iter().map(|(a, b)| a + b).sum::<f64>()
    }
}

pub fn energy_decomposed(
    labeling: &LabelMap,
    unary: &UnaryField,
    img: &Image,
    cfg: &CrfConfig,
) -> Result<EnergyBreakdown> {
    check_instance(labeling, unary, img, cfg)?;
    let n = img.pixel_count();
    let combined = cfg.combined_matrices()?;
    let unary_sum = sum_indexed(n, |i| unary.potential(i, labeling.label(i)));

    // Pairwise part, rows reduced deterministically.
    let pairwise = sum_indexed(n, |i| {
        let li = labeling.label(i);
        let mut acc = 0.0;
        for j in (i + 1)..n {
            let lj = labeling.label(j);
            let c_app = combined[0].get(li, lj);
            let c_sm = combined[1].get(li, lj);
            if c_app != 0.0 {
                acc += c_app * cfg.pairwise.appearance_unit(img, i, j);
            }
            if c_sm != 0.0 {
                acc += c_sm * cfg.pairwise.smoothness_unit(img.width(), i, j);
            }
        }
        acc
    });

    let mut sp_levels = Vec::with_capacity(cfg.sp_levels.len());
    for (h, level) in cfg.sp_levels.iter().enumerate() {
        let coeff = &combined[2 + h];
        let seg = level.filtered.segments();
        let intra = sum_indexed(n, |i| {
            let li = labeling.label(i);
            let si = seg.segment(i);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                if seg.segment(j) == si {
                    let c = coeff.get(li, labeling.label(j));
                    if c != 0.0 {
                        acc += c * level.unit(cfg.pairwise.theta_beta, i, j);
                    }
                }
            }
            acc
        });
        let extra = sum_indexed(n, |i| {
            let li = labeling.label(i);
            let si = seg.segment(i);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                if seg.segment(j) != si {
                    let c = coeff.get(li, labeling.label(j));
                    if c != 0.0 {
                        acc += c * level.unit(cfg.pairwise.theta_beta, i, j);
                    }
                }
            }
            acc
        });
        sp_levels.push((intra, extra));
    }

    Ok(EnergyBreakdown { unary: unary_sum, pairwise, sp_levels })
}

/// Sum of contrast-sensitive superpixel potentials over all unordered
/// pixel pairs, split into (intra, extra) by segment membership.
pub fn contrast_energy_split(
    labeling: &LabelMap,
    filtered: &FilteredImage,
    p: &ContrastSpParams,
) -> Result<(f64, f64)> {
    p.validate()?;
    let img = filtered.image();
    if !img.same_dimensions(labeling.width(), labeling.height()) {
        return Err(Error::Dimension("labeling does not match filtered image".into()));
    }
    let n = img.pixel_count();
    let seg = filtered.segments();
    let mut intra = 0.0;
    let mut extra = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = contrast_sp_potential(filtered, i, j, (labeling.label(i), labeling.label(j)), p);
            if seg.segment(i) == seg.segment(j) {
                intra += v;
            } else {
                extra += v;
            }
        }
    }
    Ok((intra, extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::SegmentMap;
    use crate::superpixel::segment_filter;

    fn image_1d(colors: &[[f64; 3]]) -> Image {
        Image::new(colors.len(), 1, colors.to_vec()).unwrap()
    }

    #[test]
    fn pairwise_kernel_peak_at_identity() {
        let img = image_1d(&[[10.0, 20.0, 30.0], [10.0, 20.0, 30.0]]);
        let cfg = PairwiseKernelConfig {
            theta_alpha: 5.0,
            theta_beta: 4.0,
            theta_gamma: 5.0,
            appearance_weight: KernelWeight::Scalar(1.5),
            smoothness_weight: KernelWeight::Scalar(0.5),
        };
        assert!((pairwise_kernel(&img, 0, 0, &cfg) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_kernel_hand_value() {
        // Positions (0,0) and (3,4): squared distance 25. Equal colors,
        // theta_alpha = theta_gamma = 5, unit weights:
        // 2 * exp(-25/50) = 2 e^-0.5 = 1.21306...
        let w = 4;
        let mut pixels = vec![[7.0, 7.0, 7.0]; w * 5];
        pixels[4 * w + 3] = [7.0, 7.0, 7.0];
        let img = Image::new(w, 5, pixels).unwrap();
        let cfg = PairwiseKernelConfig {
            theta_alpha: 5.0,
            theta_beta: 3.0,
            theta_gamma: 5.0,
            appearance_weight: KernelWeight::Scalar(1.0),
            smoothness_weight: KernelWeight::Scalar(1.0),
        };
        let v = pairwise_kernel(&img, 0, 4 * w + 3, &cfg);
        assert!((v - 2.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 1.2130613194252668).abs() < 1e-12);
    }

    #[test]
    fn pairwise_kernel_symmetric_and_decaying() {
        let w = 16;
        let pixels = (0..w).map(|i| [(i * 3) as f64, 100.0, 50.0]).collect::<Vec<_>>();
        let img = Image::new(w, 1, pixels).unwrap();
        let cfg = PairwiseKernelConfig {
            theta_alpha: 4.0,
            theta_beta: 9.0,
            theta_gamma: 2.0,
            appearance_weight: KernelWeight::Scalar(0.8),
            smoothness_weight: KernelWeight::Scalar(1.2),
        };
        let mut prev = f64::INFINITY;
        for j in 1..w {
            let v = pairwise_kernel(&img, 0, j, &cfg);
            assert_eq!(v, pairwise_kernel(&img, j, 0, &cfg));
            assert!(v <= 2.0 && v >= 0.0);
            assert!(v < prev, "kernel must decay with distance");
            prev = v;
        }
    }

    fn one_segment_filtered(colors: &[[f64; 3]]) -> FilteredImage {
        let img = image_1d(colors);
        let seg = SegmentMap::new(colors.len(), 1, vec![0; colors.len()]).unwrap();
        segment_filter(&img, &seg).unwrap()
    }

    #[test]
    fn sp_kernel_same_segment_same_position() {
        let filtered = one_segment_filtered(&[[9.0, 9.0, 9.0], [9.0, 9.0, 9.0]]);
        let base = PairwiseKernelConfig::scalar(2.0, 1.0);
        let level =
            SpLevel::shared(filtered, SpLevelParams { theta_alpha_s: 30.0, weight_ratio: 0.5 }, &base)
                .unwrap();
        // Same segment means zero color distance; same position means the
        // whole kernel is r * w1.
        assert!((sp_kernel(&level, 0, 0, &base) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sp_kernel_hand_value_default_parameters() {
        // Vertical pair 30 pixels apart in one segment, theta_alpha_s 30,
        // ratio 0.5, w1 = 1: 0.5 * exp(-900/1800) = 0.5 e^-0.5 = 0.30326...
        let w = 1;
        let h = 31;
        let img = Image::filled(w, h, [50.0, 60.0, 70.0]).unwrap();
        let seg = SegmentMap::new(w, h, vec![0; w * h]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        let base = PairwiseKernelConfig::scalar(1.0, 1.0);
        let level = SpLevel::shared(filtered, SpLevelParams::default(), &base).unwrap();
        let v = sp_kernel(&level, 0, 30 * w, &base);
        assert!((v - 0.5 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 0.3032653298563167).abs() < 1e-12);
    }

    #[test]
    fn sp_kernel_singleton_segments_reduce_to_appearance_term() {
        // One pixel per segment: filtered colors equal raw colors, so with
        // theta_alpha_s = theta_alpha and ratio 1 the superpixel kernel is
        // exactly the appearance term.
        let colors = [[3.0, 200.0, 90.0], [140.0, 9.0, 30.0], [77.0, 77.0, 77.0]];
        let img = image_1d(&colors);
        let seg = SegmentMap::new(3, 1, vec![0, 1, 2]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        let base = PairwiseKernelConfig {
            theta_alpha: 40.0,
            theta_beta: 60.0,
            theta_gamma: 3.0,
            appearance_weight: KernelWeight::Scalar(1.7),
            smoothness_weight: KernelWeight::Scalar(0.0),
        };
        let level = SpLevel::shared(
            filtered,
            SpLevelParams { theta_alpha_s: 40.0, weight_ratio: 1.0 },
            &base,
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let sp = sp_kernel(&level, i, j, &base);
                let app = 1.7 * base.appearance_unit(&img, i, j);
                assert!((sp - app).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contrast_potential_cases() {
        let filtered = one_segment_filtered(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        let p = ContrastSpParams { theta_p: 0.4, theta_v: 1.1, theta_beta_c: 0.05 };
        // Agreement costs nothing.
        assert_eq!(contrast_sp_potential(&filtered, 0, 1, (2, 2), &p), 0.0);
        // Disagreement within a segment pays the maximum.
        let v = contrast_sp_potential(&filtered, 0, 1, (0, 1), &p);
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn contrast_potential_floors_at_theta_p() {
        // Two far-apart segment colors: penalty approaches theta_p from above.
        let img = image_1d(&[[0.0, 0.0, 0.0], [255.0, 255.0, 255.0]]);
        let seg = SegmentMap::new(2, 1, vec![0, 1]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        let p = ContrastSpParams { theta_p: 0.4, theta_v: 1.1, theta_beta_c: 0.05 };
        let v = contrast_sp_potential(&filtered, 0, 1, (0, 1), &p);
        assert!(v > 0.4 && v < 0.4 + 1e-9);
    }

    #[test]
    fn intra_dominates_extra() {
        // Same positions and labels: an intra pair never costs less than an
        // extra pair.
        let img = image_1d(&[[10.0, 10.0, 10.0], [250.0, 0.0, 120.0]]);
        let one = SegmentMap::new(2, 1, vec![0, 0]).unwrap();
        let two = SegmentMap::new(2, 1, vec![0, 1]).unwrap();
        let p = ContrastSpParams { theta_p: 0.2, theta_v: 2.0, theta_beta_c: 0.01 };
        let fi = segment_filter(&img, &one).unwrap();
        let fe = segment_filter(&img, &two).unwrap();
        let vi = contrast_sp_potential(&fi, 0, 1, (0, 1), &p);
        let ve = contrast_sp_potential(&fe, 0, 1, (0, 1), &p);
        assert!(vi >= ve);
    }

    #[test]
    fn robust_pn_cases() {
        let p = ContrastSpParams { theta_p: 0.7, theta_v: 0.3, theta_beta_c: 1.0 };
        // All labels equal: zero.
        let v = robust_pn_closed_form(&[2, 2, 2], &[(0, 1), (1, 2), (0, 2)], &p).unwrap();
        assert_eq!(v, 0.0);
        // Every edge violated: gamma_max.
        let v = robust_pn_closed_form(&[0, 1, 2], &[(0, 1), (1, 2), (0, 2)], &p).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        // 4-cycle with labels (a, a, b, b): edges (0,1),(1,2),(2,3),(3,0)
        // disagree on (1,2) and (3,0) only.
        let v = robust_pn_closed_form(&[0, 0, 1, 1], &[(0, 1), (1, 2), (2, 3), (3, 0)], &p).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        // Empty cliques are rejected.
        assert!(robust_pn_closed_form(&[0], &[], &p).is_err());
    }

    #[test]
    fn robust_pn_matches_direct_intra_sum() {
        // The closed form and the per-edge sum are two routes to the same
        // quantity; check them against each other on a handful of cliques.
        let p = ContrastSpParams { theta_p: 0.25, theta_v: 1.75, theta_beta_c: 0.3 };
        let labels = [1u32, 0, 1, 2, 2, 0];
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)];
        let filtered = one_segment_filtered(&[[5.0, 5.0, 5.0]; 6]);
        let direct: f64 = edges
            .iter()
            .map(|&(a, b)| {
                contrast_sp_potential(&filtered, a, b, (labels[a] as usize, labels[b] as usize), &p)
            })
            .sum();
        let closed = robust_pn_closed_form(&labels, &edges, &p).unwrap();
        assert!((direct - closed).abs() < 1e-12);
    }

    fn tiny_instance() -> (LabelMap, UnaryField, Image, CrfConfig) {
        let img = Image::new(
            2,
            2,
            vec![
                [10.0, 10.0, 10.0],
                [12.0, 9.0, 11.0],
                [200.0, 180.0, 190.0],
                [198.0, 185.0, 170.0],
            ],
        )
        .unwrap();
        let unary = UnaryField::new(2, 2, 2, vec![0.3, 1.0, 0.6, 0.4, 1.2, 0.1, 0.9, 0.8]).unwrap();
        let labeling = LabelMap::new(2, 2, vec![0, 0, 1, 0]).unwrap();
        let seg = SegmentMap::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        let mut cfg = CrfConfig::potts(2, 1.3, 0.7);
        cfg.pairwise.theta_alpha = 2.0;
        cfg.pairwise.theta_beta = 20.0;
        cfg.pairwise.theta_gamma = 1.5;
        cfg.sp_levels.push(
            SpLevel::shared(
                filtered,
                SpLevelParams { theta_alpha_s: 3.0, weight_ratio: 0.5 },
                &cfg.pairwise,
            )
            .unwrap(),
        );
        (labeling, unary, img, cfg)
    }

    #[test]
    fn single_pixel_energy_is_the_unary() {
        let img = Image::filled(1, 1, [0.0, 0.0, 0.0]).unwrap();
        let unary = UnaryField::new(1, 1, 3, vec![0.4, 0.9, 0.2]).unwrap();
        let cfg = CrfConfig::potts(3, 1.0, 1.0);
        for l in 0..3 {
            let lm = LabelMap::new(1, 1, vec![l as u32]).unwrap();
            let e = gibbs_energy(&lm, &unary, &img, &cfg).unwrap();
            assert!((e - unary.potential(0, l)).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_labels_kill_potts_pairwise() {
        let img = image_1d(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
        let unary = UnaryField::new(2, 1, 2, vec![0.5, 0.7, 0.3, 0.9]).unwrap();
        let cfg = CrfConfig::potts(2, 2.0, 2.0);
        let lm = LabelMap::new(2, 1, vec![1, 1]).unwrap();
        let e = gibbs_energy(&lm, &unary, &img, &cfg).unwrap();
        assert!((e - (0.7 + 0.9)).abs() < 1e-15);
    }

    /// Independent oracle: direct summation over all C(4,2) = 6 unordered
    /// pairs with the closed-form kernel expressions written out in full.
    #[test]
    fn energy_matches_brute_force_pair_sum() {
        let (labeling, unary, img, cfg) = tiny_instance();
        let mut expected = 0.0;
        for i in 0..4 {
            expected += unary.potential(i, labeling.label(i));
        }
        let seg = cfg.sp_levels[0].filtered.segments().clone();
        let fcolors: Vec<[f64; 3]> =
            (0..4).map(|i| cfg.sp_levels[0].filtered.color(i)).collect();
        for i in 0..4 {
            for j in (i + 1)..4 {
                if labeling.label(i) == labeling.label(j) {
                    continue; // Potts
                }
                let (xi, yi) = ((i % 2) as f64, (i / 2) as f64);
                let (xj, yj) = ((j % 2) as f64, (j / 2) as f64);
                let dp = (xi - xj).powi(2) + (yi - yj).powi(2);
                let ci = img.color(i);
                let cj = img.color(j);
                let dc: f64 = (0..3).map(|k| (ci[k] - cj[k]).powi(2)).sum();
                expected += 1.3 * (-dp / (2.0 * 2.0 * 2.0) - dc / (2.0 * 20.0 * 20.0)).exp();
                expected += 0.7 * (-dp / (2.0 * 1.5 * 1.5)).exp();
                let dcs: f64 = (0..3).map(|k| (fcolors[i][k] - fcolors[j][k]).powi(2)).sum();
                expected += 0.5 * 1.3 * (-dp / (2.0 * 3.0 * 3.0) - dcs / (2.0 * 20.0 * 20.0)).exp();
                let _ = seg; // segments only affect the intra/extra split
            }
        }
        let e = gibbs_energy(&labeling, &unary, &img, &cfg).unwrap();
        assert!((e - expected).abs() < 1e-9, "{e} vs {expected}");
    }

    #[test]
    fn decomposition_sums_to_total() {
        let (labeling, unary, img, cfg) = tiny_instance();
        let parts = energy_decomposed(&labeling, &unary, &img, &cfg).unwrap();
        let total = gibbs_energy(&labeling, &unary, &img, &cfg).unwrap();
        assert!((parts.total() - total).abs() < 1e-9);
        assert_eq!(parts.sp_levels.len(), 1);
    }

    #[test]
    fn no_levels_means_no_sp_parts() {
        let (labeling, unary, img, mut cfg) = tiny_instance();
        cfg.sp_levels.clear();
        let parts = energy_decomposed(&labeling, &unary, &img, &cfg).unwrap();
        assert!(parts.sp_levels.is_empty());
    }

    #[test]
    fn one_segment_has_no_extra_part() {
        let (labeling, unary, img, mut cfg) = tiny_instance();
        let seg = SegmentMap::new(2, 2, vec![0; 4]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        cfg.sp_levels = vec![SpLevel::shared(
            filtered,
            SpLevelParams { theta_alpha_s: 3.0, weight_ratio: 0.5 },
            &cfg.pairwise,
        )
        .unwrap()];
        let parts = energy_decomposed(&labeling, &unary, &img, &cfg).unwrap();
        assert_eq!(parts.sp_levels[0].1, 0.0);
    }

    #[test]
    fn contrast_intra_sum_equals_clique_closed_forms() {
        // 3x3 image, 2 segments, random-ish labels: the intra part of the
        // contrast energy must match the per-segment closed forms.
        let img = Image::new(3, 3, (0..9).map(|i| [(i * 20) as f64, 50.0, 80.0]).collect()).unwrap();
        let seg = SegmentMap::new(3, 3, vec![0, 0, 1, 0, 0, 1, 1, 1, 1]).unwrap();
        let filtered = segment_filter(&img, &seg).unwrap();
        let labeling = LabelMap::new(3, 3, vec![0, 1, 0, 1, 1, 2, 0, 0, 2]).unwrap();
        let p = ContrastSpParams { theta_p: 0.5, theta_v: 0.9, theta_beta_c: 2.0 };
        let (intra, _) = contrast_energy_split(&labeling, &filtered, &p).unwrap();

        let mut expected = 0.0;
        for s in 0..seg.segment_count() {
            let members: Vec<usize> = (0..9).filter(|&i| seg.segment(i) == s).collect();
            let labels: Vec<u32> = members.iter().map(|&i| labeling.labels()[i]).collect();
            let mut edges = Vec::new();
            for a in 0..members.len() {
                for b in (a + 1)..members.len() {
                    edges.push((a, b));
                }
            }
            expected += robust_pn_closed_form(&labels, &edges, &p).unwrap();
        }
        assert!((intra - expected).abs() < 1e-12);
    }

    #[test]
    fn matrix_weights_fold_elementwise() {
        let mu = CompatibilityMatrix::potts(2);
        let w = KernelWeight::Matrix(LabelMatrix::new(2, vec![9.0, 3.0, 5.0, 7.0]).unwrap());
        let c = w.combined(&mu).unwrap();
        // Diagonal vanishes under Potts; off-diagonal keeps the weights.
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
        assert_eq!(c.get(0, 1), 3.0);
        assert_eq!(c.get(1, 0), 5.0);
    }

    #[test]
    fn all_agreeing_labeling_minimizes_potts_pairwise_part() {
        let (_, unary, img, cfg) = tiny_instance();
        let flat = LabelMap::new(2, 2, vec![0; 4]).unwrap();
        let flat_parts = energy_decomposed(&flat, &unary, &img, &cfg).unwrap();
        let pairwise_all = |p: &EnergyBreakdown| {
            p.pairwise + p.sp_levels.iter().map(|(a, b)| a + b).sum::<f64>()
        };
        assert_eq!(pairwise_all(&flat_parts), 0.0);
        for bits in 0..16u32 {
            let lm = LabelMap::new(2, 2, (0..4).map(|i| (bits >> i) & 1).collect()).unwrap();
            let parts = energy_decomposed(&lm, &unary, &img, &cfg).unwrap();
            assert!(pairwise_all(&parts) >= 0.0);
        }
    }
}
