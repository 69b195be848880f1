mod common;

use cnma::{
    contrast_vector, is_estimable, numeric_rank, oracle_residual_estimable, Analysis, Contrast,
    ModelSpec, Network, RankTolerance, TreatmentLabel, Unit,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const POOL: [&str; 5] = ["A", "B", "C", "D", "E"];

fn label(mask: u8) -> TreatmentLabel {
    let units = POOL
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, u)| Unit::new(u).unwrap())
        .collect();
    TreatmentLabel::from_units(units).unwrap()
}

fn mask() -> impl Strategy<Value = u8> {
    // Non-empty subsets with at most three units.
    (1u8..32).prop_filter("at most three units", |m| m.count_ones() <= 3)
}

fn studies() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec(
        (mask(), mask()).prop_filter("distinct arms", |(a, b)| a != b),
        1..7,
    )
}

fn build(studies: &[(u8, u8)]) -> Analysis {
    let contrasts = studies
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Contrast::new(format!("s{i}"), label(a), label(b), 0.0, 1.0).unwrap())
        .collect();
    Analysis::new(Network::new(contrasts).unwrap(), ModelSpec::default()).unwrap()
}

fn combo(m: &DMatrix<f64>, coefs: &[i8]) -> DVector<f64> {
    let mut v = DVector::zeros(m.ncols());
    for (r, &c) in coefs.iter().enumerate().take(m.nrows()) {
        v += m.row(r).transpose() * c as f64;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn svd_test_agrees_with_residual_oracle(
        studies in studies(),
        coefs in prop::collection::vec(-2i8..=2, 7),
        raw in prop::collection::vec(-2i8..=2, 16),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 4),
    ) {
        let a = build(&studies);
        let m = a.design.design_f64();
        let tol = RankTolerance::default();
        let p = m.ncols();
        let mut candidates = vec![
            combo(&m, &coefs),
            DVector::from_iterator(p, raw.iter().take(p).map(|&x| x as f64)),
        ];
        let t = a.catalog.treatments();
        for pair in picks.chunks(2) {
            let (i, j) = (pair[0].get(t), pair[1].get(t));
            candidates.push(contrast_vector(i, j, &a.catalog, &a.spec).unwrap().coefficients);
        }
        for k in 0..p {
            let mut e = DVector::zeros(p);
            e[k] = 1.0;
            candidates.push(e);
        }
        for v in &candidates {
            prop_assert_eq!(
                is_estimable(&m, v, tol).unwrap(),
                oracle_residual_estimable(&m, v, tol).unwrap(),
                "disagreement on {:?} for M = {}", v.as_slice(), m
            );
        }
        // Row combinations are always estimable.
        prop_assert!(is_estimable(&m, &candidates[0], tol).unwrap());
    }

    #[test]
    fn closed_under_sums_and_negation(
        studies in studies(),
        a_coefs in prop::collection::vec(-2i8..=2, 7),
        b_raw in prop::collection::vec(-2i8..=2, 16),
    ) {
        let a = build(&studies);
        let m = a.design.design_f64();
        let tol = RankTolerance::default();
        let p = m.ncols();
        let u = combo(&m, &a_coefs);
        let w = DVector::from_iterator(p, b_raw.iter().take(p).map(|&x| x as f64));
        let eu = is_estimable(&m, &u, tol).unwrap();
        let ew = is_estimable(&m, &w, tol).unwrap();
        prop_assert_eq!(ew, is_estimable(&m, &(-&w), tol).unwrap());
        if eu && ew {
            prop_assert!(is_estimable(&m, &(&u + &w), tol).unwrap());
        }
        if eu && !ew {
            prop_assert!(!is_estimable(&m, &(&u + &w), tol).unwrap());
        }
    }

    #[test]
    fn rank_ignores_row_order_and_duplicates(studies in studies(), shift in 0usize..7) {
        let a = build(&studies);
        let m = a.design.design_f64();
        let tol = RankTolerance::default();
        let n = m.nrows();
        let rotated = DMatrix::from_fn(n, m.ncols(), |r, c| m[((r + shift) % n, c)]);
        let doubled = DMatrix::from_fn(2 * n, m.ncols(), |r, c| m[(r % n, c)]);
        let rank = numeric_rank(&m, tol);
        prop_assert_eq!(rank, numeric_rank(&rotated, tol));
        prop_assert_eq!(rank, numeric_rank(&doubled, tol));
        prop_assert!(rank <= n.min(m.ncols()));
    }
}
