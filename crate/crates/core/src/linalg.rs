//! Small dense helpers on top of nalgebra's SVD and symmetric eigensolver.

use nalgebra::DMatrix;

/// Singular values in no particular order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    a.clone().singular_values().iter().copied().collect()
}

/// Cutoff below which singular values count as zero: `rel · σ_max · max(rows, cols)`.
pub fn rank_threshold(singular: &[f64], rows: usize, cols: usize, relative: f64) -> f64 {
    let smax = singular.iter().copied().fold(0.0, f64::max);
    relative * smax * rows.max(cols) as f64
}

pub fn rank_from_singular(singular: &[f64], threshold: f64) -> usize {
    singular.iter().filter(|&&s| s > threshold).count()
}

/// Moore-Penrose pseudoinverse with the same relative cutoff as the rank test.
pub fn pseudo_inverse(a: &DMatrix<f64>, relative: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if a.is_empty() {
        return DMatrix::zeros(cols, rows);
    }
    let svd = a.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let thr = rank_threshold(&sv, rows, cols, relative);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in sv.iter().enumerate() {
        if s > thr {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    out
}

/// Symmetrizes in place: `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
