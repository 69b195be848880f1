//! Generalized least squares fit of the CNMA model.
//!
//! `β̂ = (MᵀWM)⁺ MᵀW y`, where W is the block-diagonal pseudoinverse of the
//! per-study contrast covariance. Random effects add `τ²/2` to every arm
//! variance, i.e. `τ²` to every two-arm contrast variance, with `τ²` from
//! the generalized DerSimonian-Laird moment estimator.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{ContrastVector, Effects};
use crate::error::{CnmaError, Result};
use crate::estimability::{numeric_rank, RankTolerance};
use crate::linalg::{pseudo_inverse, symmetrize};
use crate::network::{arm_variances, ArmVariances, Network};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq)]
struct StudyWeights {
    study: String,
    rows: Range<usize>,
    arms: ArmVariances,
}

/// Per-study covariance blocks plus the heterogeneity variance applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    blocks: Vec<StudyWeights>,
    n_rows: usize,
    effects: Effects,
    tau2: f64,
}

impl WeightModel {
    pub fn from_network(network: &Network, effects: Effects) -> Result<Self> {
        let blocks = network
            .studies()
            .iter()
            .map(|s| {
                Ok(StudyWeights {
                    study: s.id.clone(),
                    rows: s.rows.clone(),
                    arms: arm_variances(&s.id, network.study_contrasts(s))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightModel {
            blocks,
            n_rows: network.contrasts().len(),
            effects,
            tau2: 0.0,
        })
    }

    pub fn effects(&self) -> Effects {
        self.effects
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn with_tau2(&self, tau2: f64) -> Result<Self> {
        if !(tau2.is_finite() && tau2 >= 0.0) {
            return Err(CnmaError::Fit(format!(
                "tau2 must be finite and >= 0, got {tau2}"
            )));
        }
        Ok(WeightModel {
            tau2,
            ..self.clone()
        })
    }

    /// Independent pieces of information: Σ (arms − 1) over studies.
    pub fn information_rank(&self) -> usize {
        self.blocks.iter().map(|b| b.arms.arms.len() - 1).sum()
    }

    pub fn study_covariance(&self, study: usize) -> DMatrix<f64> {
        self.blocks[study].arms.contrast_covariance(self.tau2 / 2.0)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_rows);
        for (i, b) in self.blocks.iter().enumerate() {
            let start = b.rows.start;
            let n = b.rows.len();
            out.view_mut((start, start), (n, n))
                .copy_from(&self.study_covariance(i));
        }
        out
    }

    /// Block-diagonal pseudoinverse of the study covariance blocks.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_rows);
        for (i, b) in self.blocks.iter().enumerate() {
            let start = b.rows.start;
            let n = b.rows.len();
            let mut w = pseudo_inverse(&self.study_covariance(i), 1e-12);
            symmetrize(&mut w);
            out.view_mut((start, start), (n, n)).copy_from(&w);
        }
        out
    }

    pub fn study_ids(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.study.as_str())
    }
}

mod vector_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(raw))
    }
}

mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|r| m.row(r).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, p, |r, c| rows[r][c]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub param_labels: Vec<String>,
    #[serde(with = "vector_serde")]
    pub beta_hat: DVector<f64>,
    #[serde(with = "matrix_serde")]
    pub cov_beta: DMatrix<f64>,
    pub tau2: f64,
    /// Generalized heterogeneity statistic of the common-effect fit.
    #[serde(rename = "Q")]
    pub q: f64,
    pub df: usize,
    pub rank_m: usize,
    pub effects: Effects,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: FitResult = serde_json::from_str(text)?;
        if fit.cov_beta.shape() != (fit.p(), fit.p()) || fit.param_labels.len() != fit.p() {
            return Err(CnmaError::Dimension(
                "fit file has inconsistent dimensions".into(),
            ));
        }
        Ok(fit)
    }
}

struct Gls {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    q: f64,
}

fn check_inputs(m: &DMatrix<f64>, y: &DVector<f64>, weights: &WeightModel) -> Result<()> {
    if m.nrows() == 0 || y.is_empty() {
        return Err(CnmaError::NoContrasts);
    }
    if m.nrows() != y.len() || weights.n_rows() != y.len() {
        return Err(CnmaError::Dimension(format!(
            "M has {} rows, y has {}, weights cover {}",
            m.nrows(),
            y.len(),
            weights.n_rows()
        )));
    }
    Ok(())
}

fn gls(m: &DMatrix<f64>, y: &DVector<f64>, w: &DMatrix<f64>, tol: RankTolerance) -> Result<Gls> {
    if w.iter().all(|&x| x == 0.0) {
        return Err(CnmaError::Fit("all weights are zero".into()));
    }
    let mtw = m.transpose() * w;
    let mut info = &mtw * m;
    symmetrize(&mut info);
    let mut cov = pseudo_inverse(&info, tol.relative_threshold());
    symmetrize(&mut cov);
    let beta = &cov * (&mtw * y);
    let resid = y - m * &beta;
    let q = (resid.transpose() * w * &resid)[(0, 0)].max(0.0);
    Ok(Gls { beta, cov, q })
}

/// Common-effect fit (τ² = 0).
pub fn fit_common(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &WeightModel,
    labels: &[String],
) -> Result<FitResult> {
    check_inputs(m, y, weights)?;
    if labels.len() != m.ncols() {
        return Err(CnmaError::Dimension(format!(
            "{} labels for {} parameters",
            labels.len(),
            m.ncols()
        )));
    }
    let tol = RankTolerance::default();
    let weights = weights.with_tau2(0.0)?;
    let g = gls(m, y, &weights.weight_matrix(), tol)?;
    let rank_m = numeric_rank(m, tol);
    Ok(FitResult {
        param_labels: labels.to_vec(),
        beta_hat: g.beta,
        cov_beta: g.cov,
        tau2: 0.0,
        q: g.q,
        df: weights.information_rank().saturating_sub(rank_m),
        rank_m,
        effects: Effects::Common,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tau2Estimate {
    pub tau2: f64,
    pub q: f64,
    pub df: usize,
    /// `tr(W) − tr((MᵀWM)⁺ MᵀW²M)`.
    pub scaling: f64,
    pub warning: Option<String>,
}

/// Generalized DerSimonian-Laird: `τ̂² = max(0, (Q − df) / c)`.
pub fn estimate_tau2(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    common: &FitResult,
    weights: &WeightModel,
) -> Result<Tau2Estimate> {
    check_inputs(m, y, weights)?;
    let w = weights.with_tau2(0.0)?.weight_matrix();
    let scaling = w.trace() - (&common.cov_beta * m.transpose() * &w * &w * m).trace();
    if common.df == 0 {
        return Ok(Tau2Estimate {
            tau2: 0.0,
            q: common.q,
            df: 0,
            scaling,
            warning: Some("no residual degrees of freedom; tau2 set to 0".into()),
        });
    }
    if scaling.is_nan() || scaling <= 0.0 {
        return Ok(Tau2Estimate {
            tau2: 0.0,
            q: common.q,
            df: common.df,
            scaling,
            warning: Some(format!(
                "non-positive moment scaling {scaling}; tau2 set to 0"
            )),
        });
    }
    Ok(Tau2Estimate {
        tau2: ((common.q - common.df as f64) / scaling).max(0.0),
        q: common.q,
        df: common.df,
        scaling,
        warning: None,
    })
}

/// Random-effects fit: estimate τ² from the common-effect stage, inflate, refit.
pub fn fit_random(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &WeightModel,
    labels: &[String],
) -> Result<FitResult> {
    let common = fit_common(m, y, weights, labels)?;
    let est = estimate_tau2(m, y, &common, weights)?;
    let inflated = weights.with_tau2(est.tau2)?;
    let g = gls(m, y, &inflated.weight_matrix(), RankTolerance::default())?;
    Ok(FitResult {
        beta_hat: g.beta,
        cov_beta: g.cov,
        tau2: est.tau2,
        effects: Effects::Random,
        warnings: est.warning.into_iter().collect(),
        ..common
    })
}

pub fn fit(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &WeightModel,
    labels: &[String],
) -> Result<FitResult> {
    match weights.effects() {
        Effects::Common => fit_common(m, y, weights, labels),
        Effects::Random => fit_random(m, y, weights, labels),
    }
}

/// Estimated relative effect `θ̂ = v·β̂` with a Wald 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeEffect {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub estimable: bool,
}

pub fn relative_effect(
    fit: &FitResult,
    v: &ContrastVector,
    estimable: bool,
) -> Result<RelativeEffect> {
    if v.len() != fit.p() {
        return Err(CnmaError::Dimension(format!(
            "contrast has length {} but the fit has {} parameters",
            v.len(),
            fit.p()
        )));
    }
    let estimate = v.coefficients.dot(&fit.beta_hat);
    let var = (v.coefficients.transpose() * &fit.cov_beta * &v.coefficients)[(0, 0)];
    let se = var.max(0.0).sqrt();
    Ok(RelativeEffect {
        estimate,
        se,
        ci_low: estimate - Z_95 * se,
        ci_high: estimate + Z_95 * se,
        estimable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_treatment_label, Contrast};

    fn two_study(effects: [f64; 2], se: f64) -> (DMatrix<f64>, DVector<f64>, WeightModel) {
        let a = parse_treatment_label("A").unwrap();
        let b = parse_treatment_label("B").unwrap();
        let net = Network::new(vec![
            Contrast::new("1", a.clone(), b.clone(), effects[0], se).unwrap(),
            Contrast::new("2", a, b, effects[1], se).unwrap(),
        ])
        .unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        (
            m,
            net.effects(),
            WeightModel::from_network(&net, Effects::Random).unwrap(),
        )
    }

    fn labels(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn moment_estimator_hand_computed() {
        // Q = 100·1² + 100·1² = 200, df = 1, c = 200 − 100 = 100.
        let (m, y, w) = two_study([1.0, -1.0], 0.1);
        let common = fit_common(&m, &y, &w, &labels(2)).unwrap();
        assert!((common.q - 200.0).abs() < 1e-9);
        assert_eq!(common.df, 1);
        let est = estimate_tau2(&m, &y, &common, &w).unwrap();
        assert!((est.scaling - 100.0).abs() < 1e-9);
        assert!((est.tau2 - 1.99).abs() < 1e-9);
    }

    #[test]
    fn zero_tau2_random_equals_common() {
        let (m, y, w) = two_study([0.5, 0.5], 0.2);
        let common = fit_common(&m, &y, &w, &labels(2)).unwrap();
        let random = fit_random(&m, &y, &w, &labels(2)).unwrap();
        assert_eq!(random.tau2, 0.0);
        assert_eq!(common.beta_hat, random.beta_hat);
        assert_eq!(common.cov_beta, random.cov_beta);
    }

    #[test]
    fn df_zero_warns() {
        let a = parse_treatment_label("A").unwrap();
        let b = parse_treatment_label("B").unwrap();
        let net = Network::new(vec![Contrast::new("1", a, b, 0.7, 0.1).unwrap()]).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let w = WeightModel::from_network(&net, Effects::Random).unwrap();
        let common = fit_common(&m, &net.effects(), &w, &labels(2)).unwrap();
        let est = estimate_tau2(&m, &net.effects(), &common, &w).unwrap();
        assert_eq!(est.tau2, 0.0);
        assert!(est.warning.is_some());
        let v = ContrastVector {
            coefficients: DVector::from_row_slice(&[1.0, -1.0]),
            description: "A vs B".into(),
        };
        let re = relative_effect(&common, &v, true).unwrap();
        assert!((re.estimate - 0.7).abs() < 1e-12);
        assert!((re.se - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reference_contrast_is_zero() {
        let (m, y, w) = two_study([0.3, 0.1], 0.2);
        let f = fit_common(&m, &y, &w, &labels(2)).unwrap();
        let zero = ContrastVector {
            coefficients: DVector::zeros(2),
            description: "r vs r".into(),
        };
        let re = relative_effect(&f, &zero, true).unwrap();
        assert_eq!((re.estimate, re.se), (0.0, 0.0));
    }

    #[test]
    fn empty_or_mismatched_inputs() {
        let (m, y, w) = two_study([0.3, 0.1], 0.2);
        assert!(fit_common(&m, &y, &w, &labels(3)).is_err());
        let short = DVector::from_row_slice(&[1.0]);
        assert!(fit_common(&m, &short, &w, &labels(2)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (m, y, w) = two_study([0.123456789, -0.3], 0.17);
        let f = fit_random(&m, &y, &w, &labels(2)).unwrap();
        let back = FitResult::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
    }
}
