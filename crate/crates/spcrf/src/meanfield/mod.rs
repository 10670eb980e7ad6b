//! Mean-field inference for the full multi-term energy.
//!
//! The variational family is fully factorized: one categorical `Q_i` per
//! pixel. A synchronous iteration recomputes every marginal from the
//! previous iteration's field:
//!
//! ```text
//! Q'_i(l) ∝ exp( -u_i(l) - M_i(l) )
//! M_i(l) = sum_{l'} sum_m C_m(l, l') * sum_{j != i} k_m(i, j) Q_j(l')
//! ```
//!
//! with `C_m` the folded compatibility/weight matrix of kernel `m` and
//! `k_m` its unit Gaussian. Messages come from one of two backends: an
//! exact quadratic double sum, or Gaussian filtering that is linear in the
//! pixel count. A sequential raster-order variant exists because only
//! coordinate-wise updates guarantee a non-increasing free energy.

mod lattice;
mod naive;
mod permutohedral;

pub use permutohedral::PermutohedralLattice;

use crate::error::{Error, Result};
use crate::imaging::{Image, LabelMap, UnaryField};
use crate::parallel::{map_indexed, sum_indexed};
use crate::potentials::CrfConfig;

/// Per-pixel label distributions `Q`, pixel-major like [`UnaryField`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalField {
    width: usize,
    height: usize,
    labels: usize,
    values: Vec<f64>,
}

impl MarginalField {
    /// Validates shape, range and per-pixel normalization (1e-6).
    pub fn new(width: usize, height: usize, labels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || labels == 0 {
            return Err(Error::Dimension(format!(
                "marginal field shape must be positive, got {width}x{height}x{labels}"
            )));
        }
        if values.len() != width * height * labels {
            return Err(Error::Dimension(format!(
                "value count {} does not match {width}x{height}x{labels}",
                values.len()
            )));
        }
        for i in 0..width * height {
            let row = &values[i * labels..(i + 1) * labels];
            if row.iter().any(|&q| !(0.0..=1.0 + 1e-9).contains(&q)) {
                return Err(Error::Invalid(format!("marginal of pixel {i} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "marginals of pixel {i} sum to {sum}, expected 1"
                )));
            }
        }
        Ok(MarginalField { width, height, labels, values })
    }

    pub(crate) fn from_normalized(width: usize, height: usize, labels: usize, values: Vec<f64>) -> Self {
        MarginalField { width, height, labels, values }
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

    /// `Q_i(l)`.
    pub fn probability(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.labels + l]
    }

    /// The `L` probabilities of pixel `i`.
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * self.labels..(i + 1) * self.labels]
    }

    /// Per-pixel argmax, ties to the lowest label index.
    pub fn argmax_labels(&self) -> LabelMap {
        let labels = (0..self.pixel_count())
            .map(|i| {
                let row = self.pixel(i);
                let mut best = 0usize;
                for l in 1..self.labels {
                    if row[l] > row[best] {
                        best = l;
                    }
                }
                best as u32
            })
            .collect();
        LabelMap::new(self.width, self.height, labels).expect("valid by construction")
    }

    /// Largest absolute per-entry difference.
    pub fn max_abs_diff(&self, other: &MarginalField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Which message-passing implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Exact `O(N^2)` double sum.
    Naive,
    /// Gaussian-filtering approximation, linear in the pixel count.
    Lattice,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Naive => write!(f, "naive"),
            Backend::Lattice => write!(f, "lattice"),
        }
    }
}

/// Iteration controls for [`infer`].
#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    pub iterations: usize,
    /// Stop once the max-abs Q change drops below this. Off by default so
    /// runs always execute the same number of iterations.
    pub early_stop: Option<f64>,
    /// Record the free energy after every iteration (quadratic cost).
    pub track_energy: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { iterations: 10, early_stop: None, track_energy: false }
    }
}

/// Per-run diagnostics.
#[derive(Debug, Clone)]
pub struct InferenceReport {
    pub backend: Backend,
    pub iterations_run: usize,
    /// Max-abs Q change per iteration.
    pub deltas: Vec<f64>,
    /// Free energy per iteration when tracking was enabled.
    pub free_energies: Option<Vec<f64>>,
}

fn check_unary(unary: &UnaryField, img: &Image, cfg: &CrfConfig) -> Result<()> {
    cfg.validate(img)?;
    if !img.same_dimensions(unary.width(), unary.height()) {
        return Err(Error::Dimension(format!(
            "unary {}x{} does not match image {}x{}",
            unary.width(),
            unary.height(),
            img.width(),
            img.height()
        )));
    }
    if unary.label_count() != cfg.labels {
        return Err(Error::Dimension(format!(
            "unary has {} labels, model has {}",
            unary.label_count(),
            cfg.labels
        )));
    }
    Ok(())
}

fn check_q(q: &MarginalField, img: &Image, cfg: &CrfConfig) -> Result<()> {
    if !img.same_dimensions(q.width(), q.height()) || q.label_count() != cfg.labels {
        return Err(Error::Dimension("marginal field does not match instance".into()));
    }
    for i in 0..q.pixel_count() {
        let sum: f64 = q.pixel(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!("marginals of pixel {i} are not normalized")));
        }
    }
    Ok(())
}

/// Normalizes `exp(-logits)` rows in place with max-subtraction.
fn softmax_neg_rows(values: &mut [f64], labels: usize) {
    for row in values.chunks_exact_mut(labels) {
        let m = row.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (m - *v).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Softmax of the negated unary: the zero-message fixed point.
pub fn init_marginals(unary: &UnaryField) -> MarginalField {
    let labels = unary.label_count();
    let mut values = unary.values().to_vec();
    softmax_neg_rows(&mut values, labels);
    MarginalField::from_normalized(unary.width(), unary.height(), labels, values)
}

/// Exact message field: for every pixel and label, the compatibility-
/// weighted kernel sum over all other pixels. Layout is pixel-major, `L`
/// entries per pixel.
pub fn message_pass_naive(q: &MarginalField, img: &Image, cfg: &CrfConfig) -> Result<Vec<f64>> {
    check_q(q, img, cfg)?;
    cfg.validate(img)?;
    naive::messages(q, img, cfg)
}

/// Approximate message field via Gaussian filtering: one bilateral filter
/// per kernel with the self contribution `k(i,i) = 1` subtracted
/// analytically. Agrees with [`message_pass_naive`] up to filtering error.
pub fn message_pass_lattice(q: &MarginalField, img: &Image, cfg: &CrfConfig) -> Result<Vec<f64>> {
    check_q(q, img, cfg)?;
    cfg.validate(img)?;
    lattice::messages(q, img, cfg)
}

fn messages(q: &MarginalField, img: &Image, cfg: &CrfConfig, backend: Backend) -> Result<Vec<f64>> {
    match backend {
        Backend::Naive => naive::messages(q, img, cfg),
        Backend::Lattice => lattice::messages(q, img, cfg),
    }
}

/// One synchronous update: every pixel recomputed from the previous field.
pub fn mf_step_synchronous(
    q: &MarginalField,
    unary: &UnaryField,
    img: &Image,
    cfg: &CrfConfig,
    backend: Backend,
) -> Result<MarginalField> {
    check_unary(unary, img, cfg)?;
    check_q(q, img, cfg)?;
    let m = messages(q, img, cfg, backend)?;
    let labels = cfg.labels;
    let mut values = vec![0.0; m.len()];
    map_indexed(&mut values, |k| unary.values()[k] + m[k]);
    softmax_neg_rows(&mut values, labels);
    Ok(MarginalField::from_normalized(q.width(), q.height(), labels, values))
}

/// Guard for the exhaustive sequential sweep and free-energy tracking.
const SEQUENTIAL_MAX_PIXELS: usize = 4096;

/// One raster-order sweep with immediate writes, exact messages only.
/// Each pixel update is an exact coordinate minimization of the free
/// energy, so a full sweep never increases it.
pub fn mf_step_sequential(
    q: &MarginalField,
    unary: &UnaryField,
    img: &Image,
    cfg: &CrfConfig,
) -> Result<MarginalField> {
    check_unary(unary, img, cfg)?;
    check_q(q, img, cfg)?;
    let n = img.pixel_count();
    if n > SEQUENTIAL_MAX_PIXELS {
        return Err(Error::TooLarge(format!(
            "sequential sweep supports up to {SEQUENTIAL_MAX_PIXELS} pixels, got {n}"
        )));
    }
    let labels = cfg.labels;
    let combined = cfg.combined_matrices()?;
    let mut values = q.values().to_vec();
    let mut units = Vec::new();
    let mut message = vec![0.0; labels];
    for i in 0..n {
        message.iter_mut().for_each(|m| *m = 0.0);
        // Kernel-weighted sums over the current field.
        let mut sums = vec![0.0; combined.len() * labels];
        for j in 0..n {
            if j == i {
                continue;
            }
            cfg.unit_kernels(img, i, j, &mut units);
            let qj = &values[j * labels..(j + 1) * labels];
            for (m, &ku) in units.iter().enumerate() {
                if ku == 0.0 {
                    continue;
                }
                let target = &mut sums[m * labels..(m + 1) * labels];
                for (t, &p) in target.iter_mut().zip(qj) {
                    *t += ku * p;
                }
            }
        }
        for l in 0..labels {
            let mut acc = unary.potential(i, l);
            for (m, c) in combined.iter().enumerate() {
                for lp in 0..labels {
                    acc += c.get(l, lp) * sums[m * labels + lp];
                }
            }
            message[l] = acc;
        }
        let row = &mut values[i * labels..(i + 1) * labels];
        row.copy_from_slice(&message);
        softmax_neg_rows(row, labels);
    }
    Ok(MarginalField::from_normalized(q.width(), q.height(), labels, values))
}

/// Mean-field objective `E_Q[energy] - H(Q)`: expected unary, expected
/// pairwise over all unordered pairs, and the negative entropy with the
/// `0 ln 0 = 0` convention. Upper-bounds `-ln Z`. Quadratic cost.
pub fn free_energy(q: &MarginalField, unary: &UnaryField, img: &Image, cfg: &CrfConfig) -> Result<f64> {
    check_unary(unary, img, cfg)?;
    check_q(q, img, cfg)?;
    let n = img.pixel_count();
    let labels = cfg.labels;
    let combined = cfg.combined_matrices()?;

    let unary_part = sum_indexed(n, |i| {
        let qi = q.pixel(i);
        qi.iter().zip(unary.pixel(i)).map(|(p, u)| p * u).sum::<f64>()
    });

    let entropy_part = sum_indexed(n, |i| {
        q.pixel(i).iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
    });

    let pair_part = sum_indexed(n, |i| {
        let qi = q.pixel(i);
        let mut units = Vec::new();
        let mut acc = 0.0;
        for j in (i + 1)..n {
            let qj = q.pixel(j);
            cfg.unit_kernels(img, i, j, &mut units);
            for (m, &ku) in units.iter().enumerate() {
                if ku == 0.0 {
                    continue;
                }
                let c = &combined[m];
                let mut e = 0.0;
                for (l, &pi) in qi.iter().enumerate() {
                    if pi == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for (lp, &pj) in qj.iter().enumerate() {
                        inner += c.get(l, lp) * pj;
                    }
                    e += pi * inner;
                }
                acc += ku * e;
            }
        }
        acc
    });

    Ok(unary_part + pair_part + entropy_part)
}

/// Runs synchronous mean-field iterations and extracts the approximate MAP
/// labeling by per-pixel argmax (ties to the lowest label).
pub fn infer(
    unary: &UnaryField,
    img: &Image,
    cfg: &CrfConfig,
    backend: Backend,
    opts: &InferOptions,
) -> Result<(LabelMap, MarginalField, InferenceReport)> {
    check_unary(unary, img, cfg)?;
    if opts.track_energy && img.pixel_count() > SEQUENTIAL_MAX_PIXELS {
        return Err(Error::TooLarge(format!(
            "free-energy tracking supports up to {SEQUENTIAL_MAX_PIXELS} pixels"
        )));
    }
    let mut q = init_marginals(unary);
    let mut deltas = Vec::new();
    let mut energies = if opts.track_energy { Some(Vec::new()) } else { None };
    let mut ran = 0;
    for _ in 0..opts.iterations {
        let next = mf_step_synchronous(&q, unary, img, cfg, backend)?;
        let delta = next.max_abs_diff(&q);
        q = next;
        ran += 1;
        deltas.push(delta);
        if let Some(list) = energies.as_mut() {
            list.push(free_energy(&q, unary, img, cfg)?);
        }
        if let Some(eps) = opts.early_stop {
            if delta < eps {
                break;
            }
        }
    }
    let labels = q.argmax_labels();
    let report =
        InferenceReport { backend, iterations_run: ran, deltas, free_energies: energies };
    Ok((labels, q, report))
}

#[cfg(test)]
mod tests;
