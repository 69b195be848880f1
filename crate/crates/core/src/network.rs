//! Contrast-level trial data: treatment labels, studies and network checks.
//!
//! Input is one row per observed pairwise comparison. Multi-arm studies are
//! supplied as the complete set of pairwise contrasts over their arms; the
//! per-arm variances needed for the GLS weights are recovered from the
//! reported standard errors.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CnmaError, Result};

/// An individual observed unit, e.g. a drug or a therapy modality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Unit(String);

impl Unit {
    pub fn new(label: &str) -> Result<Self> {
        let trimmed = label.trim();
        if trimmed.is_empty() {
            return Err(CnmaError::InvalidLabel {
                label: label.to_string(),
                reason: "empty unit".into(),
            });
        }
        if trimmed.contains('+') || trimmed.contains(':') {
            return Err(CnmaError::InvalidLabel {
                label: label.to_string(),
                reason: "unit labels may not contain '+' or ':'".into(),
            });
        }
        Ok(Unit(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A treatment, identified by its set of units.
///
/// `"A+B"` and `"B+A"` are the same treatment. The display form keeps the
/// order in which the units were written.
#[derive(Debug, Clone)]
pub struct TreatmentLabel {
    units: Vec<Unit>,
    set: BTreeSet<Unit>,
}

impl TreatmentLabel {
    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn unit_set(&self) -> &BTreeSet<Unit> {
        &self.set
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn is_single(&self) -> bool {
        self.units.len() == 1
    }

    pub fn contains(&self, unit: &Unit) -> bool {
        self.set.contains(unit)
    }

    /// Units sorted and joined by `+`; identical for equal labels.
    pub fn canonical(&self) -> String {
        join_units(self.set.iter())
    }

    pub fn from_units(units: Vec<Unit>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for u in &units {
            if !set.insert(u.clone()) {
                return Err(CnmaError::InvalidLabel {
                    label: join_units(units.iter()),
                    reason: format!("duplicate unit {u}"),
                });
            }
        }
        if units.is_empty() {
            return Err(CnmaError::InvalidLabel {
                label: String::new(),
                reason: "empty label".into(),
            });
        }
        Ok(TreatmentLabel { units, set })
    }
}

fn join_units<'a>(units: impl Iterator<Item = &'a Unit>) -> String {
    units.map(Unit::as_str).collect::<Vec<_>>().join("+")
}

impl PartialEq for TreatmentLabel {
    fn eq(&self, other: &Self) -> bool {
        self.set == other.set
    }
}

impl Eq for TreatmentLabel {}

impl Hash for TreatmentLabel {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.set.hash(state);
    }
}

impl PartialOrd for TreatmentLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TreatmentLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.set.cmp(&other.set)
    }
}

impl fmt::Display for TreatmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join_units(self.units.iter()))
    }
}

impl std::str::FromStr for TreatmentLabel {
    type Err = CnmaError;

    fn from_str(s: &str) -> Result<Self> {
        parse_treatment_label(s)
    }
}

impl Serialize for TreatmentLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TreatmentLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_treatment_label(&raw).map_err(serde::de::Error::custom)
    }
}

/// Parses a `+`-separated list of units.
pub fn parse_treatment_label(text: &str) -> Result<TreatmentLabel> {
    if text.trim().is_empty() {
        return Err(CnmaError::InvalidLabel {
            label: text.to_string(),
            reason: "empty label".into(),
        });
    }
    let units = text
        .split('+')
        .map(|part| {
            Unit::new(part).map_err(|e| match e {
                CnmaError::InvalidLabel { reason, .. } => CnmaError::InvalidLabel {
                    label: text.to_string(),
                    reason,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TreatmentLabel::from_units(units).map_err(|e| match e {
        CnmaError::InvalidLabel { reason, .. } => CnmaError::InvalidLabel {
            label: text.to_string(),
            reason,
        },
        other => other,
    })
}

/// One observed comparison `treat1` vs `treat2` within a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub study: String,
    pub treat1: TreatmentLabel,
    pub treat2: TreatmentLabel,
    pub effect: f64,
    pub se: f64,
}

impl Contrast {
    pub fn new(
        study: impl Into<String>,
        treat1: TreatmentLabel,
        treat2: TreatmentLabel,
        effect: f64,
        se: f64,
    ) -> Result<Self> {
        let study = study.into();
        if !(se.is_finite() && se > 0.0) {
            return Err(CnmaError::Study {
                study,
                message: format!("seTE must be positive and finite, got {se}"),
            });
        }
        if !effect.is_finite() {
            return Err(CnmaError::Study {
                study,
                message: format!("TE must be finite, got {effect}"),
            });
        }
        if treat1 == treat2 {
            return Err(CnmaError::Study {
                study,
                message: format!("treat1 and treat2 are the same treatment ({treat1})"),
            });
        }
        Ok(Contrast {
            study,
            treat1,
            treat2,
            effect,
            se,
        })
    }
}

/// A study's contiguous slice of the network's contrast list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub rows: Range<usize>,
}

/// Contrasts grouped by study.
///
/// Studies appear in order of first appearance; rows within a study keep
/// their input order. Row `r` of every design matrix refers to `contrasts[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    contrasts: Vec<Contrast>,
    studies: Vec<Study>,
}

impl Network {
    pub fn new(contrasts: Vec<Contrast>) -> Result<Self> {
        if contrasts.is_empty() {
            return Err(CnmaError::NoContrasts);
        }
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<Contrast>> = HashMap::new();
        for c in contrasts {
            if !grouped.contains_key(&c.study) {
                order.push(c.study.clone());
            }
            grouped.entry(c.study.clone()).or_default().push(c);
        }
        let mut flat = Vec::new();
        let mut studies = Vec::with_capacity(order.len());
        for id in order {
            let rows = grouped.remove(&id).unwrap_or_default();
            let start = flat.len();
            flat.extend(rows);
            studies.push(Study {
                id,
                rows: start..flat.len(),
            });
        }
        Ok(Network {
            contrasts: flat,
            studies,
        })
    }

    pub fn contrasts(&self) -> &[Contrast] {
        &self.contrasts
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn study_contrasts(&self, study: &Study) -> &[Contrast] {
        &self.contrasts[study.rows.clone()]
    }

    pub fn effects(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.contrasts.len(),
            self.contrasts.iter().map(|c| c.effect),
        )
    }

    /// Distinct treatments in order of first appearance (display form of the first occurrence).
    pub fn observed_treatments(&self) -> Vec<TreatmentLabel> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.contrasts {
            for t in [&c.treat1, &c.treat2] {
                if seen.insert(t.clone()) {
                    out.push(t.clone());
                }
            }
        }
        out
    }
}

const REQUIRED_COLUMNS: [&str; 5] = ["studlab", "treat1", "treat2", "TE", "seTE"];

/// Reads a contrast CSV with header `studlab,treat1,treat2,TE,seTE`.
pub fn parse_contrast_csv(path: impl AsRef<Path>) -> Result<Network> {
    let file = File::open(path.as_ref())?;
    parse_contrast_reader(file)
}

pub fn parse_contrast_reader<R: Read>(reader: R) -> Result<Network> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CnmaError::MissingColumn(name.to_string()))?;
    }
    let mut contrasts = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(index[i]).unwrap_or("");
        let bad = |message: String| CnmaError::BadRecord { line, message };
        let study = field(0).to_string();
        if study.is_empty() {
            return Err(bad("empty studlab".into()));
        }
        let treat1 = parse_treatment_label(field(1)).map_err(|e| bad(e.to_string()))?;
        let treat2 = parse_treatment_label(field(2)).map_err(|e| bad(e.to_string()))?;
        let effect: f64 = field(3)
            .parse()
            .map_err(|_| bad(format!("non-numeric TE {:?}", field(3))))?;
        let se: f64 = field(4)
            .parse()
            .map_err(|_| bad(format!("non-numeric seTE {:?}", field(4))))?;
        if se.is_nan() || se <= 0.0 {
            return Err(bad(format!("seTE must be positive, got {se}")));
        }
        let contrast =
            Contrast::new(study, treat1, treat2, effect, se).map_err(|e| bad(e.to_string()))?;
        contrasts.push(contrast);
    }
    Network::new(contrasts)
}

/// Informational findings about a network. None of these abort a fit on their own.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    IncompleteMultiArm {
        study: String,
        arms: usize,
        contrasts: usize,
    },
    DuplicateContrast {
        study: String,
        treat1: String,
        treat2: String,
    },
    Connected,
    Disconnected {
        subnetworks: usize,
        groups: Vec<Vec<String>>,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::IncompleteMultiArm {
                study,
                arms,
                contrasts,
            } => write!(
                f,
                "incomplete multi-arm study {study}: {contrasts} contrasts over {arms} arms, expected {}",
                arms * arms.saturating_sub(1) / 2
            ),
            Diagnostic::DuplicateContrast {
                study,
                treat1,
                treat2,
            } => write!(f, "duplicate contrast in study {study}: {treat1} vs {treat2}"),
            Diagnostic::Connected => f.write_str("connected"),
            Diagnostic::Disconnected { subnetworks, .. } => {
                write!(f, "disconnected at treatment level: {subnetworks} subnetworks")
            }
        }
    }
}

struct StudyArms {
    arms: Vec<TreatmentLabel>,
    /// Arm indices (treat1, treat2) of each contrast.
    pairs: Vec<(usize, usize)>,
}

fn study_arms(contrasts: &[Contrast]) -> StudyArms {
    let mut arms: Vec<TreatmentLabel> = Vec::new();
    let idx =
        |t: &TreatmentLabel, arms: &mut Vec<TreatmentLabel>| match arms.iter().position(|a| a == t)
        {
            Some(i) => i,
            None => {
                arms.push(t.clone());
                arms.len() - 1
            }
        };
    let pairs = contrasts
        .iter()
        .map(|c| {
            let a = idx(&c.treat1, &mut arms);
            let b = idx(&c.treat2, &mut arms);
            (a, b)
        })
        .collect();
    StudyArms { arms, pairs }
}

fn unordered(pair: (usize, usize)) -> (usize, usize) {
    (pair.0.min(pair.1), pair.0.max(pair.1))
}

fn is_complete(arms: &StudyArms) -> bool {
    let a = arms.arms.len();
    if arms.pairs.len() == 1 {
        return true;
    }
    let distinct: BTreeSet<_> = arms.pairs.iter().copied().map(unordered).collect();
    distinct.len() == arms.pairs.len() && arms.pairs.len() == a * (a - 1) / 2
}

/// Checks multi-arm completeness, duplicate contrasts and treatment-level connectivity.
pub fn validate_network(network: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for study in network.studies() {
        let contrasts = network.study_contrasts(study);
        let arms = study_arms(contrasts);
        let mut seen = BTreeSet::new();
        for (c, pair) in contrasts.iter().zip(&arms.pairs) {
            if !seen.insert(unordered(*pair)) {
                out.push(Diagnostic::DuplicateContrast {
                    study: study.id.clone(),
                    treat1: c.treat1.to_string(),
                    treat2: c.treat2.to_string(),
                });
            }
        }
        if !is_complete(&arms) {
            out.push(Diagnostic::IncompleteMultiArm {
                study: study.id.clone(),
                arms: arms.arms.len(),
                contrasts: contrasts.len(),
            });
        }
    }

    let treatments = network.observed_treatments();
    let index: HashMap<&TreatmentLabel, usize> =
        treatments.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut parent: Vec<usize> = (0..treatments.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for c in network.contrasts() {
        let a = find(&mut parent, index[&c.treat1]);
        let b = find(&mut parent, index[&c.treat2]);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, t) in treatments.iter().enumerate() {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(t.to_string()),
            None => groups.push((root, vec![t.to_string()])),
        }
    }
    if groups.len() == 1 {
        out.push(Diagnostic::Connected);
    } else {
        out.push(Diagnostic::Disconnected {
            subnetworks: groups.len(),
            groups: groups.into_iter().map(|(_, g)| g).collect(),
        });
    }
    out
}

/// Per-arm variances of one study, recovered from its contrast standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmVariances {
    pub arms: Vec<TreatmentLabel>,
    pub variances: Vec<f64>,
    /// (treat1 arm, treat2 arm) for each contrast, in study row order.
    pub pairs: Vec<(usize, usize)>,
}

impl ArmVariances {
    /// Covariance of the study's contrasts when every arm variance is increased by `inflation`.
    pub fn contrast_covariance(&self, inflation: f64) -> DMatrix<f64> {
        let n = self.pairs.len();
        let v: Vec<f64> = self.variances.iter().map(|v| v + inflation).collect();
        DMatrix::from_fn(n, n, |r, c| {
            let (k, l) = self.pairs[r];
            let (m, q) = self.pairs[c];
            // Cov(x_k - x_l, x_m - x_q) for independent arm estimates.
            let mut s = 0.0;
            if k == m {
                s += v[k];
            }
            if k == q {
                s -= v[k];
            }
            if l == m {
                s -= v[l];
            }
            if l == q {
                s += v[l];
            }
            s
        })
    }
}

/// Solves `se²(k,l) = v_k + v_l` for the arm variances of a study.
///
/// Two-arm studies split the contrast variance evenly over both arms, so
/// the implied block is `[se²]`. Studies with more than three arms are
/// overdetermined and solved in the least-squares sense.
pub fn arm_variances(study: &str, contrasts: &[Contrast]) -> Result<ArmVariances> {
    let arms = study_arms(contrasts);
    if !is_complete(&arms) {
        return Err(CnmaError::Study {
            study: study.to_string(),
            message: format!(
                "multi-arm study must list all {} pairwise contrasts over its {} arms, found {}",
                arms.arms.len() * (arms.arms.len() - 1) / 2,
                arms.arms.len(),
                contrasts.len()
            ),
        });
    }
    let a = arms.arms.len();
    let variances = if contrasts.len() == 1 {
        let half = contrasts[0].se * contrasts[0].se / 2.0;
        vec![half, half]
    } else {
        let design = DMatrix::from_fn(arms.pairs.len(), a, |r, c| {
            let (k, l) = arms.pairs[r];
            if c == k || c == l {
                1.0
            } else {
                0.0
            }
        });
        let rhs = DVector::from_iterator(contrasts.len(), contrasts.iter().map(|c| c.se * c.se));
        let normal = design.transpose() * &design;
        let solved = normal
            .cholesky()
            .ok_or_else(|| CnmaError::Study {
                study: study.to_string(),
                message: "arm variance system is singular".into(),
            })?
            .solve(&(design.transpose() * rhs));
        let scale = contrasts.iter().map(|c| c.se * c.se).fold(0.0, f64::max);
        let mut out = Vec::with_capacity(a);
        for (i, &v) in solved.iter().enumerate() {
            if v < -1e-12 * scale {
                return Err(CnmaError::Study {
                    study: study.to_string(),
                    message: format!(
                        "inconsistent standard errors: reconstructed variance of arm {} is {v:.6}",
                        arms.arms[i]
                    ),
                });
            }
            out.push(v.max(0.0));
        }
        out
    };
    Ok(ArmVariances {
        arms: arms.arms,
        variances,
        pairs: arms.pairs,
    })
}

/// Covariance block of all contrasts reported by one study.
pub fn reconstruct_multiarm_covariance(
    study: &str,
    contrasts: &[Contrast],
) -> Result<DMatrix<f64>> {
    Ok(arm_variances(study, contrasts)?.contrast_covariance(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> TreatmentLabel {
        parse_treatment_label(s).unwrap()
    }

    fn contrast(study: &str, t1: &str, t2: &str, se: f64) -> Contrast {
        Contrast::new(study, label(t1), label(t2), 0.0, se).unwrap()
    }

    #[test]
    fn labels_have_set_semantics() {
        let ab = label("A+B");
        assert_eq!(ab.units().len(), 2);
        assert_eq!(label("A").units(), &[Unit::new("A").unwrap()]);
        let ba = label(" B + A ");
        assert_eq!(ba.to_string(), "B+A");
        assert_eq!(ab, ba);
        assert_eq!(ab.canonical(), "A+B");
    }

    #[test]
    fn label_errors() {
        assert!(parse_treatment_label("A++B").is_err());
        assert!(parse_treatment_label("A+A").is_err());
        assert!(parse_treatment_label("   ").is_err());
        assert!(parse_treatment_label("A:B").is_err());
    }

    #[test]
    fn csv_parsing_and_errors() {
        let ok = "studlab,treat1,treat2,TE,seTE\n1,A,B+C,0.1,0.2\n2,D,B+C,0.3,0.4\n";
        let net = parse_contrast_reader(ok.as_bytes()).unwrap();
        assert_eq!(net.contrasts().len(), 2);
        assert_eq!(net.studies().len(), 2);

        let empty = "studlab,treat1,treat2,TE,seTE\n";
        let err = parse_contrast_reader(empty.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "no contrasts");

        let missing = "studlab,treat1,TE,seTE\n1,A,0.1,0.2\n";
        assert!(matches!(
            parse_contrast_reader(missing.as_bytes()),
            Err(CnmaError::MissingColumn(c)) if c == "treat2"
        ));
        let nonnum = "studlab,treat1,treat2,TE,seTE\n1,A,B,x,0.2\n";
        assert!(parse_contrast_reader(nonnum.as_bytes()).is_err());
        let zero_se = "studlab,treat1,treat2,TE,seTE\n1,A,B,0.1,0\n";
        assert!(parse_contrast_reader(zero_se.as_bytes()).is_err());
        let same = "studlab,treat1,treat2,TE,seTE\n1,A+B,B+A,0.1,0.2\n";
        assert!(parse_contrast_reader(same.as_bytes()).is_err());
    }

    #[test]
    fn three_arm_study_is_one_study() {
        let text =
            "studlab,treat1,treat2,TE,seTE\ns,A,B,0.1,1\nt,A,C,0.1,1\ns,A,C,0.2,1\ns,B,C,0.3,1\n";
        let net = parse_contrast_reader(text.as_bytes()).unwrap();
        assert_eq!(net.studies().len(), 2);
        assert_eq!(net.studies()[0].rows, 0..3);
        let diags = validate_network(&net);
        assert!(!diags
            .iter()
            .any(|d| matches!(d, Diagnostic::IncompleteMultiArm { .. })));
    }

    #[test]
    fn incomplete_multiarm_is_reported() {
        let net = Network::new(vec![
            contrast("s", "A", "B", 1.0),
            contrast("s", "A", "C", 1.0),
        ])
        .unwrap();
        let diags = validate_network(&net);
        assert!(diags.contains(&Diagnostic::IncompleteMultiArm {
            study: "s".into(),
            arms: 3,
            contrasts: 2
        }));
        assert!(arm_variances("s", net.contrasts()).is_err());
    }

    #[test]
    fn duplicate_contrast_is_reported() {
        let net = Network::new(vec![
            contrast("s", "A", "B", 1.0),
            contrast("s", "B", "A", 1.0),
        ])
        .unwrap();
        let diags = validate_network(&net);
        assert!(diags
            .iter()
            .any(|d| matches!(d, Diagnostic::DuplicateContrast { .. })));
    }

    #[test]
    fn connectivity() {
        let net = Network::new(vec![
            contrast("1", "A", "B+C", 1.0),
            contrast("2", "D", "B+C", 1.0),
            contrast("3", "D", "A+B", 1.0),
            contrast("4", "A", "E+F", 1.0),
        ])
        .unwrap();
        let diags = validate_network(&net);
        assert_eq!(diags, vec![Diagnostic::Connected]);
        let split = Network::new(vec![
            contrast("1", "A", "B", 1.0),
            contrast("2", "C", "D", 1.0),
        ])
        .unwrap();
        let d = validate_network(&split);
        assert_eq!(
            d.last().unwrap().to_string(),
            "disconnected at treatment level: 2 subnetworks"
        );
    }

    #[test]
    fn two_arm_block() {
        let block = reconstruct_multiarm_covariance("s", &[contrast("s", "A", "B", 0.5)]).unwrap();
        assert_eq!(block, DMatrix::from_element(1, 1, 0.25));
    }

    #[test]
    fn three_arm_block() {
        let s = 2f64.sqrt();
        let cs = [
            contrast("s", "A", "B", s),
            contrast("s", "A", "C", s),
            contrast("s", "B", "C", s),
        ];
        let arms = arm_variances("s", &cs).unwrap();
        for v in &arms.variances {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let block = arms.contrast_covariance(0.0);
        // d12 = x1 - x2, d13 = x1 - x3, d23 = x2 - x3
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 1.0, 2.0, 1.0, -1.0, 1.0, 2.0]);
        assert!((block - expected).abs().max() < 1e-12);
    }

    #[test]
    fn negative_arm_variance_names_study() {
        let cs = [
            contrast("trial-x", "A", "B", 0.1f64.sqrt()),
            contrast("trial-x", "A", "C", 0.1f64.sqrt()),
            contrast("trial-x", "B", "C", 0.5f64.sqrt()),
        ];
        let err = arm_variances("trial-x", &cs).unwrap_err();
        assert!(err.to_string().contains("trial-x"), "{err}");
    }
}
