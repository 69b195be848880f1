#![allow(dead_code)]

use std::path::PathBuf;

use cnma::{parse_treatment_label, Contrast, Network, TreatmentLabel};

pub fn l(s: &str) -> TreatmentLabel {
    parse_treatment_label(s).unwrap()
}

/// `(study, treat1, treat2, TE, seTE)` rows.
pub fn network(rows: &[(&str, &str, &str, f64, f64)]) -> Network {
    Network::new(
        rows.iter()
            .map(|(s, a, b, te, se)| Contrast::new(*s, l(a), l(b), *te, *se).unwrap())
            .collect(),
    )
    .unwrap()
}

pub fn toy() -> Network {
    network(&[
        ("1", "A", "B+C", 0.12, 0.21),
        ("2", "D", "B+C", -0.35, 0.18),
        ("3", "D", "A+B", -0.41, 0.25),
        ("4", "A", "E+F", 0.08, 0.3),
    ])
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}
