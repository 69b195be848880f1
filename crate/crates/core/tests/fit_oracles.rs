mod common;

use approx::assert_relative_eq;
use cnma::{
    contrast_vector, estimate_tau2, fit_common, fit_random, relative_effect, Analysis, Effects,
    ModelSpec, WeightModel,
};
use common::{l, network, toy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn fit_of(a: &Analysis) -> cnma::FitResult {
    a.fit().unwrap()
}

/// Plain two-arm NMA solved on the basic parameters with P as baseline.
fn reference_nma(
    rows: &[(&str, &str, &str, f64, f64)],
    treatments: &[&str],
) -> (DVector<f64>, DMatrix<f64>) {
    let k = treatments.len() - 1;
    let idx = |t: &str| treatments.iter().position(|x| *x == t).unwrap();
    let n = rows.len();
    let mut x = DMatrix::zeros(n, k);
    let mut w = DMatrix::zeros(n, n);
    let mut y = DVector::zeros(n);
    for (r, (_, a, b, te, se)) in rows.iter().enumerate() {
        if idx(a) > 0 {
            x[(r, idx(a) - 1)] += 1.0;
        }
        if idx(b) > 0 {
            x[(r, idx(b) - 1)] -= 1.0;
        }
        w[(r, r)] = 1.0 / (se * se);
        y[r] = *te;
    }
    let info = x.transpose() * &w * &x;
    let chol = info.clone().cholesky().unwrap();
    let beta = chol.solve(&(x.transpose() * &w * y));
    (beta, chol.inverse())
}

#[test]
fn matches_plain_nma_when_no_components() {
    let rows = [
        ("1", "X", "P", 0.5, 0.2),
        ("2", "Y", "P", 0.3, 0.25),
        ("3", "X", "Y", 0.1, 0.3),
        ("4", "Z", "X", -0.2, 0.22),
        ("5", "Z", "P", 0.4, 0.35),
    ];
    let a = Analysis::new(network(&rows), ModelSpec::default()).unwrap();
    assert!(a.catalog.components().is_empty());
    let fit = fit_of(&a);
    let (beta, cov) = reference_nma(&rows, &["P", "X", "Y", "Z"]);
    for (i, t) in ["X", "Y", "Z"].iter().enumerate() {
        let v = contrast_vector(&l(t), &l("P"), &a.catalog, &a.spec).unwrap();
        let re = relative_effect(&fit, &v, true).unwrap();
        assert_relative_eq!(re.estimate, beta[i], epsilon = 1e-10);
        assert_relative_eq!(re.se, cov[(i, i)].sqrt(), epsilon = 1e-10);
        assert_relative_eq!(
            re.ci_high - re.ci_low,
            2.0 * 1.959964 * re.se,
            epsilon = 1e-12
        );
    }
}

#[test]
fn pairwise_dersimonian_laird() {
    let te = [0.1, 0.6, -0.2, 0.9, 0.35];
    let se = [0.2, 0.15, 0.3, 0.25, 0.1];
    let rows: Vec<(String, f64, f64)> = (0..5).map(|i| (format!("s{i}"), te[i], se[i])).collect();
    let borrowed: Vec<(&str, &str, &str, f64, f64)> = rows
        .iter()
        .map(|(s, t, e)| (s.as_str(), "A", "B", *t, *e))
        .collect();
    let a = Analysis::new(network(&borrowed), ModelSpec::additive(Effects::Random)).unwrap();
    let weights = a.weights().unwrap();
    let m = a.design.design_f64();
    let y = a.network.effects();
    let common = fit_common(&m, &y, &weights, &a.design.param_labels).unwrap();
    let est = estimate_tau2(&m, &y, &common, &weights).unwrap();

    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mean: f64 = w.iter().zip(&te).map(|(w, t)| w * t).sum::<f64>() / sw;
    let q: f64 = w.iter().zip(&te).map(|(w, t)| w * (t - mean).powi(2)).sum();
    let c = sw - w.iter().map(|w| w * w).sum::<f64>() / sw;
    let tau2 = ((q - 4.0) / c).max(0.0);
    assert!(tau2 > 0.0);
    assert_relative_eq!(common.q, q, epsilon = 1e-9);
    assert_eq!(common.df, 4);
    assert_relative_eq!(est.tau2, tau2, epsilon = 1e-10);

    let random = fit_random(&m, &y, &weights, &a.design.param_labels).unwrap();
    let wr: Vec<f64> = se.iter().map(|s| 1.0 / (s * s + tau2)).collect();
    let swr: f64 = wr.iter().sum();
    let mu: f64 = wr.iter().zip(&te).map(|(w, t)| w * t).sum::<f64>() / swr;
    let v = contrast_vector(&l("A"), &l("B"), &a.catalog, &a.spec).unwrap();
    let re = relative_effect(&random, &v, true).unwrap();
    assert_relative_eq!(re.estimate, mu, epsilon = 1e-10);
    assert_relative_eq!(re.se, (1.0 / swr).sqrt(), epsilon = 1e-10);
    assert_eq!(random.q, common.q);
}

#[test]
fn three_arm_block_weight_is_inverse_covariance() {
    let net = network(&[
        ("s", "A", "B", 0.2, (0.02f64 + 0.03).sqrt()),
        ("s", "A", "C", 0.5, (0.02f64 + 0.05).sqrt()),
        ("s", "B", "C", 0.3, (0.03f64 + 0.05).sqrt()),
        ("t", "A", "C", 0.4, 0.3),
    ]);
    let w = WeightModel::from_network(&net, Effects::Common).unwrap();
    let cov = w.covariance();
    assert_relative_eq!(cov[(0, 1)], 0.02, epsilon = 1e-12);
    assert_relative_eq!(cov[(0, 2)], -0.03, epsilon = 1e-12);
    assert_relative_eq!(cov[(1, 2)], 0.05, epsilon = 1e-12);
    let wm = w.weight_matrix();
    // The 3-contrast block has rank 2: W Σ W = W.
    let block_cov = cov.view((0, 0), (3, 3)).into_owned();
    let block_w = wm.view((0, 0), (3, 3)).into_owned();
    assert_relative_eq!(
        &block_w * &block_cov * &block_w,
        block_w.clone(),
        epsilon = 1e-8
    );
    assert_relative_eq!(wm[(3, 3)], 1.0 / 0.09, epsilon = 1e-10);
    assert_eq!(w.information_rank(), 3);
    assert_relative_eq!(
        w.with_tau2(0.1).unwrap().covariance()[(3, 3)],
        0.09 + 0.1,
        epsilon = 1e-12
    );
}

#[test]
fn toy_estimable_effects_ignore_null_space() {
    let a = Analysis::new(toy(), ModelSpec::default()).unwrap();
    let fit = fit_of(&a);
    assert_eq!(fit.rank_m, 4);
    assert_eq!(fit.df, 0);
    let m = a.design.design_f64();
    let eig = (m.transpose() * &m).symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let null: DVector<f64> = eig.eigenvectors.column(k).into_owned();
    assert!((&m * &null).norm() < 1e-9);
    let shifted = &fit.beta_hat + null * 3.7;
    let v = contrast_vector(&l("A"), &l("D"), &a.catalog, &a.spec).unwrap();
    assert_relative_eq!(
        v.coefficients.dot(&fit.beta_hat),
        v.coefficients.dot(&shifted),
        epsilon = 1e-9
    );
    // With df = 0 the fit reproduces every observation.
    assert!((&m * &fit.beta_hat - a.network.effects()).norm() < 1e-9);
}

#[test]
fn all_zero_weights_is_an_error() {
    let a = Analysis::new(toy(), ModelSpec::default()).unwrap();
    let m = DMatrix::<f64>::zeros(0, 5);
    let y = DVector::<f64>::zeros(0);
    assert!(fit_common(&m, &y, &a.weights().unwrap(), &a.design.param_labels).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residuals_are_w_orthogonal_to_the_design(
        te in prop::collection::vec(-1.0f64..1.0, 6),
        se in prop::collection::vec(0.1f64..0.5, 6),
        random in any::<bool>(),
    ) {
        let pairs = [("A", "P"), ("B", "P"), ("A+B", "P"), ("A+C", "A"), ("C", "B"), ("B+C", "P")];
        let rows: Vec<(String, &str, &str, f64, f64)> = pairs
            .iter()
            .enumerate()
            .map(|(i, (x, z))| (format!("s{i}"), *x, *z, te[i], se[i]))
            .collect();
        let borrowed: Vec<_> = rows.iter().map(|(s, x, z, t, e)| (s.as_str(), *x, *z, *t, *e)).collect();
        let effects = if random { Effects::Random } else { Effects::Common };
        let a = Analysis::new(network(&borrowed), ModelSpec::additive(effects)).unwrap();
        let fit = a.fit().unwrap();
        let m = a.design.design_f64();
        let w = a.weights().unwrap().with_tau2(fit.tau2).unwrap().weight_matrix();
        let resid = a.network.effects() - &m * &fit.beta_hat;
        let score = m.transpose() * w * resid;
        prop_assert!(score.norm() < 1e-8, "score {}", score);
        prop_assert!(fit.tau2 >= 0.0);
        prop_assert_eq!(fit.df, 6 - fit.rank_m);
    }
}
