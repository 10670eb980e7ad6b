//! Exact message passing by direct double summation.

use crate::error::Result;
use crate::imaging::Image;
use crate::meanfield::MarginalField;
use crate::parallel::map_indexed;
use crate::potentials::{CrfConfig, LabelMatrix};

/// `M_i(l) = sum_m sum_{l'} C_m(l,l') sum_{j != i} k_m(i,j) Q_j(l')`,
/// computed exactly. Rows are independent, so the pixel loop parallelizes
/// without changing results.
pub(super) fn messages(q: &MarginalField, img: &Image, cfg: &CrfConfig) -> Result<Vec<f64>> {
    let n = img.pixel_count();
    let labels = cfg.labels;
    let combined = cfg.combined_matrices()?;
    let active: Vec<bool> = combined.iter().map(|c| c.values().iter().any(|&v| v != 0.0)).collect();

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    map_indexed(&mut rows, |i| {
        message_row(q, img, cfg, &combined, &active, i, n, labels)
    });
    Ok(rows.into_iter().flatten().collect())
}

fn message_row(
    q: &MarginalField,
    img: &Image,
    cfg: &CrfConfig,
    combined: &[LabelMatrix],
    active: &[bool],
    i: usize,
    n: usize,
    labels: usize,
) -> Vec<f64> {
    let kernels = combined.len();
    // Kernel-weighted marginal sums over j != i.
    let mut sums = vec![0.0; kernels * labels];
    let mut units = Vec::new();
    for j in 0..n {
        if j == i {
            continue;
        }
        cfg.unit_kernels(img, i, j, &mut units);
        let qj = q.pixel(j);
        for (m, &ku) in units.iter().enumerate() {
            if !active[m] || ku == 0.0 {
                continue;
            }
            let target = &mut sums[m * labels..(m + 1) * labels];
            for (t, &p) in target.iter_mut().zip(qj) {
                *t += ku * p;
            }
        }
    }
    let mut row = vec![0.0; labels];
    for (m, c) in combined.iter().enumerate() {
        if !active[m] {
            continue;
        }
        for (l, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for lp in 0..labels {
                acc += c.get(l, lp) * sums[m * labels + lp];
            }
            *out += acc;
        }
    }
    row
}
