//! Basic matrix B, component matrix C and design matrix M = B·C.
//!
//! All three are kept as small-integer matrices so they can be compared
//! exactly; they are converted to `f64` only when fitting or testing rank.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catalog::ComponentCatalog;
use crate::error::{CnmaError, Result};
use crate::network::{Network, TreatmentLabel, Unit};

pub type IntMatrix = DMatrix<i32>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchoring {
    #[default]
    Unanchored,
    /// The named parameter is fixed at zero.
    Anchored(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Effects {
    #[default]
    Common,
    Random,
}

/// Interaction between two or more components, written `A:B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionTerm {
    members: Vec<Unit>,
}

impl InteractionTerm {
    pub fn new(members: Vec<Unit>) -> Result<Self> {
        let mut sorted = members.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != members.len() {
            return Err(CnmaError::InvalidModel(format!(
                "interaction {} repeats a component",
                join(&members)
            )));
        }
        if members.len() < 2 {
            return Err(CnmaError::InvalidModel(format!(
                "interaction {} needs at least two components",
                join(&members)
            )));
        }
        Ok(InteractionTerm { members })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let members = text
            .split(':')
            .map(|m| {
                let m = m.trim();
                if m.is_empty() {
                    return Err(CnmaError::InvalidModel(format!(
                        "empty component in interaction {text:?}"
                    )));
                }
                Unit::new(m)
            })
            .collect::<Result<Vec<_>>>()?;
        InteractionTerm::new(members)
    }

    pub fn members(&self) -> &[Unit] {
        &self.members
    }

    /// Active for any combination containing every member.
    pub fn is_active(&self, units: &TreatmentLabel) -> bool {
        self.members.iter().all(|m| units.contains(m))
    }
}

fn join(members: &[Unit]) -> String {
    members
        .iter()
        .map(Unit::as_str)
        .collect::<Vec<_>>()
        .join(":")
}

impl fmt::Display for InteractionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join(&self.members))
    }
}

impl Serialize for InteractionTerm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InteractionTerm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        InteractionTerm::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ModelSpec {
    #[serde(default)]
    pub anchoring: Anchoring,
    #[serde(default)]
    pub interactions: Vec<InteractionTerm>,
    #[serde(default)]
    pub effects: Effects,
}

impl ModelSpec {
    pub fn additive(effects: Effects) -> Self {
        ModelSpec {
            effects,
            ..Default::default()
        }
    }

    pub fn anchored(mut self, anchor: impl Into<String>) -> Self {
        self.anchoring = Anchoring::Anchored(anchor.into());
        self
    }

    pub fn with_interaction(mut self, term: InteractionTerm) -> Self {
        self.interactions.push(term);
        self
    }

    /// Components, standalone, collapsed, then interactions in declaration order.
    pub fn parameter_labels(&self, catalog: &ComponentCatalog) -> Vec<String> {
        let mut labels = catalog.base_parameter_labels();
        labels.extend(self.interactions.iter().map(|i| i.to_string()));
        labels
    }

    pub fn validate(&self, catalog: &ComponentCatalog) -> Result<()> {
        for term in &self.interactions {
            for m in term.members() {
                if !catalog.is_component(m) {
                    return Err(CnmaError::InvalidModel(format!(
                        "interaction {term} uses {m}, which is not a component"
                    )));
                }
            }
        }
        for (i, a) in self.interactions.iter().enumerate() {
            if self.interactions[..i].iter().any(|b| same_members(a, b)) {
                return Err(CnmaError::InvalidModel(format!(
                    "interaction {a} declared twice"
                )));
            }
        }
        self.anchor_index(catalog).map(|_| ())
    }

    fn anchor_index(&self, catalog: &ComponentCatalog) -> Result<Option<usize>> {
        match &self.anchoring {
            Anchoring::Unanchored => Ok(None),
            Anchoring::Anchored(name) => {
                let labels = self.parameter_labels(catalog);
                let wanted = name.trim();
                labels
                    .iter()
                    .position(|l| l == wanted)
                    .or_else(|| {
                        // Accept "B+A" for the collapsed column "A+B".
                        let parsed = crate::network::parse_treatment_label(wanted).ok()?;
                        catalog
                            .collapsed()
                            .iter()
                            .chain(catalog.standalone())
                            .find(|t| **t == parsed)
                            .and_then(|t| labels.iter().position(|l| *l == t.to_string()))
                    })
                    .map(Some)
                    .ok_or_else(|| CnmaError::UnknownParameter(name.clone()))
            }
        }
    }
}

fn same_members(a: &InteractionTerm, b: &InteractionTerm) -> bool {
    let mut x = a.members.clone();
    let mut y = b.members.clone();
    x.sort();
    y.sort();
    x == y
}

/// Row vector over the parameter axis, e.g. `V_{A,D}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastVector {
    pub coefficients: DVector<f64>,
    pub description: String,
}

impl ContrastVector {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn negated(&self) -> ContrastVector {
        ContrastVector {
            coefficients: -&self.coefficients,
            description: self.description.clone(),
        }
    }
}

/// Encodes a combination of units as a C-style row.
///
/// Either the label is exactly a standalone or collapsed treatment, or every
/// unit is a component. Unobserved combinations of components are allowed.
pub fn encode_row(
    label: &TreatmentLabel,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<Vec<i32>> {
    let labels = spec.parameter_labels(catalog);
    let n_comp = catalog.components().len();
    let n_standalone = catalog.standalone().len();
    let mut row = vec![0i32; labels.len()];

    if let Some(i) = catalog.standalone().iter().position(|t| t == label) {
        row[n_comp + i] = 1;
    } else if let Some(i) = catalog.collapsed().iter().position(|t| t == label) {
        row[n_comp + n_standalone + i] = 1;
    } else {
        for u in label.units() {
            match catalog.components().binary_search(u) {
                Ok(i) => row[i] = 1,
                Err(_) => {
                    return Err(CnmaError::Encoding {
                        label: label.to_string(),
                        reason: format!(
                            "{u} is not a component and {label} is not an observed standalone or collapsed treatment"
                        ),
                    })
                }
            }
        }
        let base = catalog.base_parameter_labels().len();
        for (k, term) in spec.interactions.iter().enumerate() {
            if term.is_active(label) {
                row[base + k] = 1;
            }
        }
    }
    if let Some(anchor) = spec.anchor_index(catalog)? {
        row[anchor] = 0;
    }
    Ok(row)
}

pub fn encode_combination(
    label: &TreatmentLabel,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<ContrastVector> {
    let row = encode_row(label, catalog, spec)?;
    Ok(ContrastVector {
        coefficients: DVector::from_iterator(row.len(), row.iter().map(|&x| x as f64)),
        description: label.to_string(),
    })
}

/// `encode(i) - encode(j)`.
pub fn contrast_vector(
    i: &TreatmentLabel,
    j: &TreatmentLabel,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<ContrastVector> {
    let a = encode_combination(i, catalog, spec)?;
    let b = encode_combination(j, catalog, spec)?;
    Ok(ContrastVector {
        coefficients: a.coefficients - b.coefficients,
        description: format!("{i} vs {j}"),
    })
}

/// Basic matrix: +1 for treat1, −1 for treat2, one row per contrast.
pub fn build_basic_matrix(
    network: &Network,
    catalog: &ComponentCatalog,
) -> (IntMatrix, Vec<TreatmentLabel>) {
    let treatments = catalog.treatments().to_vec();
    let mut b = IntMatrix::zeros(network.contrasts().len(), treatments.len());
    for (r, c) in network.contrasts().iter().enumerate() {
        let i = catalog
            .treatment_index(&c.treat1)
            .expect("catalog derived from this network");
        let j = catalog
            .treatment_index(&c.treat2)
            .expect("catalog derived from this network");
        b[(r, i)] = 1;
        b[(r, j)] = -1;
    }
    (b, treatments)
}

pub fn build_component_matrix(catalog: &ComponentCatalog, spec: &ModelSpec) -> Result<IntMatrix> {
    spec.validate(catalog)?;
    let p = spec.parameter_labels(catalog).len();
    let rows = catalog
        .treatments()
        .iter()
        .map(|t| encode_row(t, catalog, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]))
}

pub fn build_design_matrix(basic: &IntMatrix, component: &IntMatrix) -> Result<IntMatrix> {
    if basic.ncols() != component.nrows() {
        return Err(CnmaError::Dimension(format!(
            "B has {} columns but C has {} rows",
            basic.ncols(),
            component.nrows()
        )));
    }
    Ok(basic * component)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub basic: IntMatrix,
    pub component: IntMatrix,
    pub design: IntMatrix,
    pub treatment_labels: Vec<String>,
    pub param_labels: Vec<String>,
}

impl DesignMatrices {
    pub fn build(network: &Network, catalog: &ComponentCatalog, spec: &ModelSpec) -> Result<Self> {
        let (basic, treatments) = build_basic_matrix(network, catalog);
        let component = build_component_matrix(catalog, spec)?;
        let design = build_design_matrix(&basic, &component)?;
        Ok(DesignMatrices {
            basic,
            component,
            design,
            treatment_labels: treatments.iter().map(|t| t.to_string()).collect(),
            param_labels: spec.parameter_labels(catalog),
        })
    }

    pub fn p(&self) -> usize {
        self.param_labels.len()
    }

    pub fn design_f64(&self) -> DMatrix<f64> {
        to_f64(&self.design)
    }
}

pub fn to_f64(m: &IntMatrix) -> DMatrix<f64> {
    m.map(|x| x as f64)
}

/// Writes an integer matrix as CSV with the given column header.
pub fn write_matrix_csv<W: Write>(out: W, header: &[String], m: &IntMatrix) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(CnmaError::Dimension(format!(
            "{} header labels for {} columns",
            header.len(),
            m.ncols()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::derive_component_catalog;
    use crate::network::{parse_treatment_label, Contrast};

    fn l(s: &str) -> TreatmentLabel {
        parse_treatment_label(s).unwrap()
    }

    fn toy() -> (Network, ComponentCatalog) {
        let rows = [
            ("1", "A", "B+C"),
            ("2", "D", "B+C"),
            ("3", "D", "A+B"),
            ("4", "A", "E+F"),
        ];
        let net = Network::new(
            rows.iter()
                .map(|(s, a, b)| Contrast::new(*s, l(a), l(b), 0.0, 1.0).unwrap())
                .collect(),
        )
        .unwrap();
        let cat = derive_component_catalog(&net);
        (net, cat)
    }

    fn row(v: &ContrastVector) -> Vec<i32> {
        v.coefficients.iter().map(|&x| x as i32).collect()
    }

    #[test]
    fn single_contrast_basic_matrix() {
        let net =
            Network::new(vec![Contrast::new("1", l("A"), l("B"), 0.0, 1.0).unwrap()]).unwrap();
        let cat = derive_component_catalog(&net);
        let (b, _) = build_basic_matrix(&net, &cat);
        assert_eq!(b, IntMatrix::from_row_slice(1, 2, &[1, -1]));
        let c = build_component_matrix(&cat, &ModelSpec::default()).unwrap();
        assert_eq!(c, IntMatrix::identity(2, 2));
    }

    #[test]
    fn three_arm_rows() {
        let net = Network::new(vec![
            Contrast::new("s", l("A"), l("B"), 0.0, 1.0).unwrap(),
            Contrast::new("s", l("A"), l("C"), 0.0, 1.0).unwrap(),
            Contrast::new("s", l("B"), l("C"), 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let cat = derive_component_catalog(&net);
        let (b, _) = build_basic_matrix(&net, &cat);
        assert_eq!(
            b,
            IntMatrix::from_row_slice(3, 3, &[1, -1, 0, 1, 0, -1, 0, 1, -1])
        );
    }

    #[test]
    fn encodings_and_contrasts() {
        let (_, cat) = toy();
        let spec = ModelSpec::default();
        assert_eq!(
            row(&encode_combination(&l("A+C"), &cat, &spec).unwrap()),
            [1, 0, 1, 0, 0]
        );
        assert_eq!(
            row(&encode_combination(&l("C"), &cat, &spec).unwrap()),
            [0, 0, 1, 0, 0]
        );
        assert!(encode_combination(&l("E"), &cat, &spec).is_err());
        assert!(encode_combination(&l("A+D"), &cat, &spec).is_err());
        assert_eq!(
            row(&contrast_vector(&l("A"), &l("D"), &cat, &spec).unwrap()),
            [1, 0, 0, -1, 0]
        );
        assert_eq!(
            row(&contrast_vector(&l("A"), &l("A"), &cat, &spec).unwrap()),
            [0; 5]
        );
        assert_eq!(
            row(&contrast_vector(&l("A+C"), &l("D"), &cat, &spec).unwrap()),
            [1, 0, 1, -1, 0]
        );
        assert_eq!(
            row(&encode_combination(&l("F+E"), &cat, &spec).unwrap()),
            [0, 0, 0, 0, 1]
        );
    }

    #[test]
    fn unknown_anchor_and_bad_interaction() {
        let (_, cat) = toy();
        let err = build_component_matrix(&cat, &ModelSpec::default().anchored("Z")).unwrap_err();
        assert!(err.to_string().contains("unknown parameter"));
        let bad = ModelSpec::default().with_interaction(InteractionTerm::parse("A:D").unwrap());
        assert!(build_component_matrix(&cat, &bad).is_err());
        assert!(InteractionTerm::parse("A").is_err());
        assert!(InteractionTerm::parse("A:A").is_err());
    }

    #[test]
    fn csv_export() {
        let (net, cat) = toy();
        let d = DesignMatrices::build(&net, &cat, &ModelSpec::default()).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &d.param_labels, &d.design).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "A,B,C,D,E+F\n1,-1,-1,0,0\n0,-1,-1,1,0\n-1,-1,0,1,0\n1,0,0,0,-1\n"
        );
    }
}
