//! Which contrasts are uniquely estimable from a design matrix.
//!
//! A contrast `v` is estimable exactly when it lies in the row space of M.
//! The primary test compares `rank(M)` with the rank of M with `v` appended
//! as a row. An independent least-squares residual test is provided as a
//! cross-check for verdicts close to the tolerance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::ComponentCatalog;
use crate::design::{contrast_vector, Anchoring, ModelSpec};
use crate::error::{CnmaError, Result};
use crate::linalg::{rank_from_singular, rank_threshold, singular_values};
use crate::network::TreatmentLabel;

/// Relative singular-value cutoff for numerical rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankTolerance {
    relative_threshold: f64,
}

impl RankTolerance {
    pub fn new(relative_threshold: f64) -> Result<Self> {
        if !(relative_threshold > 0.0 && relative_threshold < 1.0) {
            return Err(CnmaError::InvalidModel(format!(
                "rank tolerance must lie in (0, 1), got {relative_threshold}"
            )));
        }
        Ok(RankTolerance { relative_threshold })
    }

    pub fn relative_threshold(&self) -> f64 {
        self.relative_threshold
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance {
            relative_threshold: 1e-8,
        }
    }
}

/// Number of singular values above `rel · σ_max · max(rows, cols)`.
pub fn numeric_rank(a: &DMatrix<f64>, tol: RankTolerance) -> usize {
    let sv = singular_values(a);
    let thr = rank_threshold(&sv, a.nrows(), a.ncols(), tol.relative_threshold);
    rank_from_singular(&sv, thr)
}

fn near_threshold(sv: &[f64], thr: f64) -> bool {
    thr > 0.0 && sv.iter().any(|&s| s > thr / 10.0 && s <= thr * 10.0)
}

fn append_row(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(
        n + 1,
        m.ncols(),
        |r, c| if r < n { m[(r, c)] } else { v[c] },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub estimable: bool,
    /// Some singular value sits within a factor 10 of the cutoff.
    pub fragile: bool,
    pub rank: usize,
    pub augmented_rank: usize,
}

/// A design matrix with its rank computed once, for testing many contrasts.
#[derive(Debug, Clone)]
pub struct RowSpace {
    design: DMatrix<f64>,
    tol: RankTolerance,
    rank: usize,
    fragile: bool,
}

impl RowSpace {
    pub fn new(design: DMatrix<f64>, tol: RankTolerance) -> Self {
        let sv = singular_values(&design);
        let thr = rank_threshold(&sv, design.nrows(), design.ncols(), tol.relative_threshold);
        RowSpace {
            rank: rank_from_singular(&sv, thr),
            fragile: near_threshold(&sv, thr),
            design,
            tol,
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn tolerance(&self) -> RankTolerance {
        self.tol
    }

    pub fn fully_identified(&self) -> bool {
        self.rank == self.p()
    }

    pub fn test(&self, v: &DVector<f64>) -> Result<Verdict> {
        if v.len() != self.p() {
            return Err(CnmaError::Dimension(format!(
                "contrast has length {} but M has {} columns",
                v.len(),
                self.p()
            )));
        }
        let aug = append_row(&self.design, v);
        let sv = singular_values(&aug);
        let thr = rank_threshold(&sv, aug.nrows(), aug.ncols(), self.tol.relative_threshold);
        let augmented_rank = rank_from_singular(&sv, thr);
        Ok(Verdict {
            estimable: augmented_rank == self.rank,
            fragile: self.fragile || near_threshold(&sv, thr),
            rank: self.rank,
            augmented_rank,
        })
    }
}

/// True iff appending `v` to M does not raise the numerical rank.
pub fn is_estimable(m: &DMatrix<f64>, v: &DVector<f64>, tol: RankTolerance) -> Result<bool> {
    RowSpace::new(m.clone(), tol).test(v).map(|v| v.estimable)
}

/// Relative least-squares residual of `v` against the row space of M.
///
/// The orthonormal basis of the row space is built by modified Gram-Schmidt
/// with a second reorthogonalization pass; rows whose remaining norm is at
/// most the rank cutoff are treated as dependent.
pub fn row_space_residual(m: &DMatrix<f64>, v: &DVector<f64>, tol: RankTolerance) -> Result<f64> {
    if v.len() != m.ncols() {
        return Err(CnmaError::Dimension(format!(
            "contrast has length {} but M has {} columns",
            v.len(),
            m.ncols()
        )));
    }
    let scale = tol.relative_threshold * m.nrows().max(m.ncols()) as f64;
    let max_row = (0..m.nrows()).map(|r| m.row(r).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in 0..m.nrows() {
        let mut q: DVector<f64> = m.row(r).transpose();
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&q);
                q.axpy(-d, b, 1.0);
            }
        }
        let n = q.norm();
        if n > scale * max_row.max(1.0) {
            basis.push(q / n);
        }
    }
    let mut res = v.clone();
    for _ in 0..2 {
        for b in &basis {
            let d = b.dot(&res);
            res.axpy(-d, b, 1.0);
        }
    }
    Ok(res.norm() / v.norm().max(1.0))
}

/// Independent check: `v` is estimable iff its least-squares residual against
/// the rows of M is below `rel · max(rows, cols)`.
pub fn oracle_residual_estimable(
    m: &DMatrix<f64>,
    v: &DVector<f64>,
    tol: RankTolerance,
) -> Result<bool> {
    let residual = row_space_residual(m, v, tol)?;
    Ok(residual < tol.relative_threshold * m.nrows().max(m.ncols()) as f64)
}

pub fn full_identifiability(m: &DMatrix<f64>, tol: RankTolerance) -> bool {
    numeric_rank(m, tol) == m.ncols()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementVerdict {
    pub label: String,
    pub estimable: bool,
    pub fragile: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimabilityReport {
    pub reference: String,
    pub elements: Vec<ElementVerdict>,
    pub rank_m: usize,
    pub p: usize,
    pub fully_identified: bool,
}

impl EstimabilityReport {
    pub fn all_estimable(&self) -> bool {
        self.elements.iter().all(|e| e.estimable)
    }
}

/// Tests `V_{i,ref}` for every non-reference element of `set`.
///
/// Elements that cannot be encoded get `estimable = false` with the encoding
/// error attached.
pub fn check_set(
    row_space: &RowSpace,
    set: &[TreatmentLabel],
    reference: &TreatmentLabel,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<EstimabilityReport> {
    if !set.contains(reference) {
        return Err(CnmaError::Question(format!(
            "reference {reference} is not in the set"
        )));
    }
    let elements = set
        .par_iter()
        .filter(|t| *t != reference)
        .map(|t| match contrast_vector(t, reference, catalog, spec) {
            Ok(v) => {
                let verdict = row_space.test(&v.coefficients)?;
                Ok(ElementVerdict {
                    label: t.to_string(),
                    estimable: verdict.estimable,
                    fragile: verdict.fragile,
                    error: None,
                })
            }
            Err(e) => Ok(ElementVerdict {
                label: t.to_string(),
                estimable: false,
                fragile: false,
                error: Some(e.to_string()),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimabilityReport {
        reference: reference.to_string(),
        elements,
        rank_m: row_space.rank(),
        p: row_space.p(),
        fully_identified: row_space.fully_identified(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterVerdict {
    pub label: String,
    pub estimable: bool,
    pub fragile: bool,
    /// The anchor of an anchored model, fixed at zero rather than estimated.
    pub fixed: bool,
}

/// Row-space verdict for each unit vector `e_k` of the parameter axis.
pub fn component_diagnostics(
    row_space: &RowSpace,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<Vec<ParameterVerdict>> {
    let labels = spec.parameter_labels(catalog);
    if labels.len() != row_space.p() {
        return Err(CnmaError::Dimension(format!(
            "{} parameter labels for {} columns",
            labels.len(),
            row_space.p()
        )));
    }
    let anchor = match &spec.anchoring {
        Anchoring::Unanchored => None,
        Anchoring::Anchored(name) => Some(name.trim().to_string()),
    };
    labels
        .iter()
        .enumerate()
        .map(|(k, label)| {
            let mut e = DVector::zeros(labels.len());
            e[k] = 1.0;
            let verdict = row_space.test(&e)?;
            Ok(ParameterVerdict {
                label: label.clone(),
                estimable: verdict.estimable,
                fragile: verdict.fragile,
                fixed: anchor.as_deref() == Some(label.as_str()),
            })
        })
        .collect()
}
