//! Ranking metrics over a refined set of estimable elements.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::catalog::ComponentCatalog;
use crate::design::{contrast_vector, ContrastVector, ModelSpec};
use crate::error::{CnmaError, Result};
use crate::estimability::{check_set, EstimabilityReport, RowSpace};
use crate::fit::FitResult;
use crate::network::TreatmentLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    PointEstimate,
    PBest,
    MedianRank,
    ExpectedRank,
    Sucra,
    PScore,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::PointEstimate,
        Metric::PBest,
        Metric::MedianRank,
        Metric::ExpectedRank,
        Metric::Sucra,
        Metric::PScore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::PointEstimate => "point-estimate",
            Metric::PBest => "p-best",
            Metric::MedianRank => "median-rank",
            Metric::ExpectedRank => "expected-rank",
            Metric::Sucra => "sucra",
            Metric::PScore => "p-score",
        }
    }

    /// Whether the metric needs effect samples.
    pub fn needs_samples(self) -> bool {
        matches!(
            self,
            Metric::PBest | Metric::MedianRank | Metric::ExpectedRank | Metric::Sucra
        )
    }

    /// True when a smaller metric value means a more preferred element.
    pub fn ascending(self, orientation: Orientation) -> bool {
        match self {
            Metric::MedianRank | Metric::ExpectedRank => true,
            Metric::PBest | Metric::Sucra | Metric::PScore => false,
            Metric::PointEstimate => orientation == Orientation::SmallerIsBetter,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = CnmaError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| CnmaError::Question(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    LargerIsBetter,
    SmallerIsBetter,
}

impl Orientation {
    /// Strictly better.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::LargerIsBetter => a > b,
            Orientation::SmallerIsBetter => a < b,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::LargerIsBetter => Orientation::SmallerIsBetter,
            Orientation::SmallerIsBetter => Orientation::LargerIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Joint,
    Independent,
}

/// An element of S left out of S*.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub label: String,
    pub reason: String,
}

pub const NOT_ESTIMABLE: &str = "Not estimable";

/// Result of testing S against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub refined: Vec<TreatmentLabel>,
    pub exclusions: Vec<Exclusion>,
    pub report: EstimabilityReport,
}

impl Refinement {
    pub fn is_complete(&self) -> bool {
        self.exclusions.is_empty()
    }
}

/// Splits S into the estimable subset S* (reference first kept in place) and
/// the exclusions.
pub fn refine_set(
    row_space: &RowSpace,
    set: &[TreatmentLabel],
    reference: &TreatmentLabel,
    catalog: &ComponentCatalog,
    spec: &ModelSpec,
) -> Result<Refinement> {
    let report = check_set(row_space, set, reference, catalog, spec)?;
    let mut verdicts = report.elements.iter();
    let mut refined = Vec::new();
    let mut exclusions = Vec::new();
    for t in set {
        if t == reference {
            refined.push(t.clone());
            continue;
        }
        let v = verdicts
            .next()
            .expect("one verdict per non-reference element");
        if v.estimable {
            refined.push(t.clone());
        } else {
            let reason = match &v.error {
                Some(e) => format!("{NOT_ESTIMABLE}: {e}"),
                None => NOT_ESTIMABLE.to_string(),
            };
            exclusions.push(Exclusion {
                label: t.to_string(),
                reason,
            });
        }
    }
    Ok(Refinement {
        refined,
        exclusions,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyQuestion {
    pub set: Vec<TreatmentLabel>,
    pub refined: Vec<TreatmentLabel>,
    pub reference: TreatmentLabel,
    pub metric: Metric,
    pub orientation: Orientation,
    pub n_samples: usize,
    pub seed: u64,
    pub mode: SamplingMode,
}

impl HierarchyQuestion {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(CnmaError::Question("n_samples must be at least 1".into()));
        }
        if !self.refined.contains(&self.reference) {
            return Err(CnmaError::Question(format!(
                "reference {} is not in the refined set",
                self.reference
            )));
        }
        if let Some(t) = self.refined.iter().find(|t| !self.set.contains(t)) {
            return Err(CnmaError::Question(format!("{t} is in S* but not in S")));
        }
        Ok(())
    }
}

/// The S* elements with their `V_{i,r}` vectors, all checked estimable.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingElements {
    pub labels: Vec<String>,
    pub vectors: Vec<ContrastVector>,
    pub reference: usize,
}

impl RankingElements {
    pub fn new(
        refined: &[TreatmentLabel],
        reference: &TreatmentLabel,
        row_space: &RowSpace,
        catalog: &ComponentCatalog,
        spec: &ModelSpec,
    ) -> Result<Self> {
        let reference_idx = refined.iter().position(|t| t == reference).ok_or_else(|| {
            CnmaError::Question(format!("reference {reference} is not in the refined set"))
        })?;
        let mut vectors = Vec::with_capacity(refined.len());
        for t in refined {
            let v = contrast_vector(t, reference, catalog, spec)?;
            if !row_space.test(&v.coefficients)?.estimable {
                return Err(CnmaError::Question(format!(
                    "{} is not estimable",
                    v.description
                )));
            }
            vectors.push(v);
        }
        Ok(RankingElements {
            labels: refined.iter().map(|t| t.to_string()).collect(),
            vectors,
            reference: reference_idx,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacked `V_{i,r}` rows.
    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.vectors.first().map_or(0, |v| v.len());
        DMatrix::from_fn(self.len(), p, |i, k| self.vectors[i].coefficients[k])
    }

    pub fn estimates(&self, fit: &FitResult) -> DVector<f64> {
        self.matrix() * &fit.beta_hat
    }

    pub fn covariance(&self, fit: &FitResult) -> DMatrix<f64> {
        let a = self.matrix();
        let mut cov = &a * &fit.cov_beta * a.transpose();
        crate::linalg::symmetrize(&mut cov);
        cov
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Resampled { seed: u64, mode: SamplingMode },
    External { file: String },
}

/// M draws × |S*| relative effects versus the reference, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSamples {
    labels: Vec<String>,
    reference: usize,
    values: Vec<f64>,
    provenance: Provenance,
}

impl EffectSamples {
    pub fn new(
        labels: Vec<String>,
        reference: usize,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let k = labels.len();
        if k == 0 || reference >= k {
            return Err(CnmaError::Samples("reference column out of range".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(k) {
            return Err(CnmaError::Samples(format!(
                "{} values do not fill rows of {k} columns",
                values.len()
            )));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(CnmaError::Samples(format!("non-finite entry {x}")));
        }
        if values.chunks(k).any(|row| row[reference] != 0.0) {
            return Err(CnmaError::Samples(format!(
                "reference column {} is not identically zero",
                labels[reference]
            )));
        }
        Ok(EffectSamples {
            labels,
            reference,
            values,
            provenance,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.labels.len()
    }

    pub fn n_elements(&self) -> usize {
        self.labels.len()
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.values.chunks(self.labels.len())
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let k = self.labels.len();
        &self.values[m * k..(m + 1) * k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry, keeping the reference column at zero.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Result<EffectSamples> {
        let k = self.labels.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &x)| {
                let col = idx % k;
                if col == self.reference {
                    0.0
                } else {
                    f(col, x)
                }
            })
            .collect();
        EffectSamples::new(
            self.labels.clone(),
            self.reference,
            values,
            self.provenance.clone(),
        )
    }

    /// CSV with the labels as header; values use the shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.labels)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Factor `cov = L Lᵀ` by eigendecomposition so singular covariances work.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = cov.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let floor = -1e-10 * scale.max(f64::MIN_POSITIVE);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&x| x < floor) {
        return Err(CnmaError::Samples(format!(
            "contrast covariance is not positive semidefinite (eigenvalue {bad})"
        )));
    }
    let mut l = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    Ok(l)
}

/// Normal draws of the relative effects versus the reference.
///
/// Sample `m` uses ChaCha20 stream `m` of `seed`, so the output does not depend
/// on how rows are split across threads.
pub fn sample_effects(
    fit: &FitResult,
    elements: &RankingElements,
    n_samples: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<EffectSamples> {
    if n_samples == 0 {
        return Err(CnmaError::Question("n_samples must be at least 1".into()));
    }
    if elements.is_empty() {
        return Err(CnmaError::Question("no elements to rank".into()));
    }
    if let Some(v) = elements.vectors.iter().find(|v| v.len() != fit.p()) {
        return Err(CnmaError::Dimension(format!(
            "{} has length {} but the fit has {} parameters",
            v.description,
            v.len(),
            fit.p()
        )));
    }
    let k = elements.len();
    let mean = elements.estimates(fit);
    let cov = elements.covariance(fit);
    let factor = match mode {
        SamplingMode::Joint => psd_factor(&cov)?,
        SamplingMode::Independent => {
            if let Some(i) = (0..k).find(|&i| cov[(i, i)] < -1e-12) {
                return Err(CnmaError::Samples(format!(
                    "negative variance for {}",
                    elements.labels[i]
                )));
            }
            DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt()))
        }
    };
    let reference = elements.reference;
    let mut values = vec![0.0; n_samples * k];
    values.par_chunks_mut(k).enumerate().for_each(|(m, row)| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(m as u64);
        let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (i, out) in row.iter_mut().enumerate() {
            if i == reference {
                continue;
            }
            let mut x = mean[i];
            for (j, zj) in z.iter().enumerate() {
                x += factor[(i, j)] * zj;
            }
            *out = x;
        }
    });
    EffectSamples::new(
        elements.labels.clone(),
        reference,
        values,
        Provenance::Resampled { seed, mode },
    )
}

/// Reads a samples CSV whose header names the elements.
pub fn ingest_samples(path: impl AsRef<Path>, reference: &str) -> Result<EffectSamples> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_samples(file, reference, path.display().to_string())
}

pub fn read_samples<R: std::io::Read>(
    reader: R,
    reference: &str,
    source: String,
) -> Result<EffectSamples> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let wanted = reference.parse::<TreatmentLabel>().ok();
    let ref_idx = labels
        .iter()
        .position(|l| {
            l == reference
                || matches!((&wanted, l.parse::<TreatmentLabel>()), (Some(a), Ok(b)) if *a == b)
        })
        .ok_or_else(|| CnmaError::MissingColumn(reference.to_string()))?;
    let mut values = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(n as u64 + 2, |p| p.line());
        if rec.len() != labels.len() {
            return Err(CnmaError::BadRecord {
                line,
                message: format!("expected {} fields, found {}", labels.len(), rec.len()),
            });
        }
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| CnmaError::BadRecord {
                line,
                message: format!("non-numeric entry {field:?}"),
            })?;
            values.push(x);
        }
    }
    EffectSamples::new(
        labels,
        ref_idx,
        values,
        Provenance::External { file: source },
    )
}

/// Probability of being strictly better than every other element.
pub fn p_best(samples: &EffectSamples, orientation: Orientation) -> Vec<f64> {
    let k = samples.n_elements();
    let mut wins = vec![0u64; k];
    for row in samples.rows() {
        if let Some(i) = strict_best(row, orientation) {
            wins[i] += 1;
        }
    }
    let m = samples.n_samples() as f64;
    wins.into_iter().map(|w| w as f64 / m).collect()
}

fn strict_best(row: &[f64], orientation: Orientation) -> Option<usize> {
    let mut best = 0;
    for i in 1..row.len() {
        if orientation.better(row[i], row[best]) {
            best = i;
        }
    }
    row.iter()
        .enumerate()
        .all(|(j, &x)| j == best || orientation.better(row[best], x))
        .then_some(best)
}

/// Integer ranks, one row per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    n_elements: usize,
    values: Vec<u32>,
}

impl RankMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_elements.max(1)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn row(&self, m: usize) -> &[u32] {
        &self.values[m * self.n_elements..(m + 1) * self.n_elements]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = u32> + '_ {
        self.values.iter().skip(i).step_by(self.n_elements).copied()
    }
}

/// `rank(i) = |S*| − #{j ≠ i : i beats j}`; tied elements share the worse rank.
pub fn ranks_per_sample(samples: &EffectSamples, orientation: Orientation) -> RankMatrix {
    let k = samples.n_elements();
    let mut values = vec![0u32; samples.values().len()];
    values
        .par_chunks_mut(k)
        .zip(samples.values().par_chunks(k))
        .for_each(|(out, row)| {
            for i in 0..k {
                let beaten = (0..k)
                    .filter(|&j| j != i && orientation.better(row[i], row[j]))
                    .count();
                out[i] = (k - beaten) as u32;
            }
        });
    RankMatrix {
        n_elements: k,
        values,
    }
}

/// Per-column median; the mean of the two middle values when M is even.
pub fn median_rank(ranks: &RankMatrix) -> Vec<f64> {
    let m = ranks.n_samples();
    (0..ranks.n_elements())
        .map(|i| {
            let mut col: Vec<u32> = ranks.column(i).collect();
            col.sort_unstable();
            if m % 2 == 1 {
                col[m / 2] as f64
            } else {
                (col[m / 2 - 1] as f64 + col[m / 2] as f64) / 2.0
            }
        })
        .collect()
}

pub fn expected_rank(ranks: &RankMatrix) -> Vec<f64> {
    let m = ranks.n_samples() as f64;
    (0..ranks.n_elements())
        .map(|i| ranks.column(i).map(u64::from).sum::<u64>() as f64 / m)
        .collect()
}

/// `SUCRA(i) = (n − E[rank(i)]) / (n − 1)`.
pub fn sucra(expected: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(CnmaError::Question(
            "SUCRA needs at least two elements".into(),
        ));
    }
    let nf = n as f64;
    Ok(expected.iter().map(|e| (nf - e) / (nf - 1.0)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PScores {
    pub values: Vec<f64>,
    /// Pairs with zero standard error and a nonzero difference.
    pub degenerate: Vec<(String, String)>,
}

/// Sample-free P-scores from the analytic covariance of the fit.
pub fn p_score(
    fit: &FitResult,
    elements: &RankingElements,
    orientation: Orientation,
) -> Result<PScores> {
    let k = elements.len();
    if k < 2 {
        return Err(CnmaError::Question(
            "P-score needs at least two elements".into(),
        ));
    }
    let theta = elements.estimates(fit);
    let cov = elements.covariance(fit);
    let normal = Normal::standard();
    let var_scale = cov.diagonal().iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let theta_scale = theta.iter().fold(1.0f64, |a, &t| a.max(t.abs()));
    let mut sums = vec![0.0; k];
    let mut degenerate = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = theta[i] - theta[j];
            let var = cov[(i, i)] + cov[(j, j)] - 2.0 * cov[(i, j)];
            let signed = match orientation {
                Orientation::LargerIsBetter => d,
                Orientation::SmallerIsBetter => -d,
            };
            let p = if var <= 1e-24 * var_scale {
                if signed.abs() <= 1e-12 * theta_scale {
                    0.5
                } else {
                    degenerate.push((elements.labels[i].clone(), elements.labels[j].clone()));
                    if signed > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            } else {
                normal.cdf(signed / var.sqrt())
            };
            sums[i] += p;
            sums[j] += 1.0 - p;
        }
    }
    let denom = (k - 1) as f64;
    Ok(PScores {
        values: sums.into_iter().map(|s| s / denom).collect(),
        degenerate,
    })
}

/// Elements ordered most to least preferred, with competition positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Hierarchy {
    /// Element indices in hierarchy order.
    pub order: Vec<usize>,
    /// 1-based position of each element (indexed like the input); ties share
    /// the best position and the next one skips.
    pub positions: Vec<usize>,
    /// Groups of two or more tied elements, in hierarchy order.
    pub ties: Vec<Vec<usize>>,
}

pub fn build_hierarchy(values: &[f64], metric: Metric, orientation: Orientation) -> Hierarchy {
    let ascending = metric.ascending(orientation);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        if ascending { c } else { c.reverse() }.then(a.cmp(&b))
    });
    let mut positions = vec![0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            positions[i] = start + 1;
        }
        if end - start > 1 {
            ties.push(order[start..end].to_vec());
        }
        start = end;
    }
    Hierarchy {
        order,
        positions,
        ties,
    }
}

/// Metric values for every element plus any P-score degeneracy flags.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValues {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn compute_metric(
    metric: Metric,
    fit: &FitResult,
    elements: &RankingElements,
    samples: Option<&EffectSamples>,
    orientation: Orientation,
) -> Result<MetricValues> {
    let need =
        || samples.ok_or_else(|| CnmaError::Question(format!("metric {metric} needs samples")));
    let plain = |values| MetricValues {
        values,
        warnings: Vec::new(),
    };
    if let Some(s) = samples {
        if s.labels() != elements.labels.as_slice() {
            return Err(CnmaError::Samples(format!(
                "sample columns {:?} do not match the elements {:?}",
                s.labels(),
                elements.labels
            )));
        }
    }
    Ok(match metric {
        Metric::PointEstimate => plain(elements.estimates(fit).iter().copied().collect()),
        Metric::PBest => plain(p_best(need()?, orientation)),
        Metric::MedianRank => plain(median_rank(&ranks_per_sample(need()?, orientation))),
        Metric::ExpectedRank => plain(expected_rank(&ranks_per_sample(need()?, orientation))),
        Metric::Sucra => {
            let e = expected_rank(&ranks_per_sample(need()?, orientation));
            plain(sucra(&e, elements.len())?)
        }
        Metric::PScore => {
            let ps = p_score(fit, elements, orientation)?;
            MetricValues {
                values: ps.values,
                warnings: ps
                    .degenerate
                    .into_iter()
                    .map(|(a, b)| format!("{a} vs {b} has zero standard error"))
                    .collect(),
            }
        }
    })
}
