//! Hierarchy reports: JSON, CSV table and a static forest plot.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{CnmaError, Result};
use crate::fit::{relative_effect, FitResult};
use crate::ranking::{
    Exclusion, Hierarchy, HierarchyQuestion, Metric, Orientation, RankingElements, SamplingMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub set: Vec<String>,
    pub refined: Vec<String>,
    pub reference: String,
    pub metric: Metric,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportElement {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    /// `None` for the reference, whose effect is fixed at zero.
    pub ci: Option<[f64; 2]>,
    pub metric: f64,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub question: QuestionSummary,
    /// Ranked elements, most to least preferred.
    pub elements: Vec<ReportElement>,
    pub exclusions: Vec<Exclusion>,
    pub ties: Vec<Vec<String>>,
    pub seed: u64,
    pub n_samples: usize,
    pub mode: SamplingMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl HierarchyReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        question: &HierarchyQuestion,
        elements: &RankingElements,
        fit: &FitResult,
        metric_values: &[f64],
        hierarchy: &Hierarchy,
        exclusions: Vec<Exclusion>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if metric_values.len() != elements.len() || hierarchy.positions.len() != elements.len() {
            return Err(CnmaError::Dimension(
                "metric values, hierarchy and elements differ in length".into(),
            ));
        }
        let mut ranked = Vec::with_capacity(elements.len());
        for &i in &hierarchy.order {
            let re = relative_effect(fit, &elements.vectors[i], true)?;
            ranked.push(ReportElement {
                label: elements.labels[i].clone(),
                estimate: re.estimate,
                se: re.se,
                ci: (i != elements.reference).then_some([re.ci_low, re.ci_high]),
                metric: metric_values[i],
                position: hierarchy.positions[i],
            });
        }
        Ok(HierarchyReport {
            question: QuestionSummary {
                set: question.set.iter().map(|t| t.to_string()).collect(),
                refined: question.refined.iter().map(|t| t.to_string()).collect(),
                reference: question.reference.to_string(),
                metric: question.metric,
                orientation: question.orientation,
            },
            elements: ranked,
            exclusions,
            ties: hierarchy
                .ties
                .iter()
                .map(|g| g.iter().map(|&i| elements.labels[i].clone()).collect())
                .collect(),
            seed: question.seed,
            n_samples: question.n_samples,
            mode: question.mode,
            warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn element(&self, label: &str) -> Option<&ReportElement> {
        self.elements.iter().find(|e| e.label == label)
    }

    /// Ranked rows in hierarchy order, then one row per exclusion.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "estimate",
            "se",
            "ci_low",
            "ci_high",
            self.question.metric.name(),
            "position",
            "note",
        ])?;
        for e in &self.elements {
            let (lo, hi) = match e.ci {
                Some([lo, hi]) => (lo.to_string(), hi.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                e.label.clone(),
                e.estimate.to_string(),
                e.se.to_string(),
                lo,
                hi,
                e.metric.to_string(),
                e.position.to_string(),
                String::new(),
            ])?;
        }
        for x in &self.exclusions {
            w.write_record([x.label.as_str(), "", "", "", "", "", "", x.reason.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const ROW: f64 = 24.0;
const TOP: f64 = 48.0;
const LABEL_X: f64 = 12.0;
const PLOT_LEFT: f64 = 240.0;
const PLOT_RIGHT: f64 = 600.0;
const METRIC_X: f64 = 700.0;
const WIDTH: f64 = 760.0;

/// Forest plot of the ranked elements in hierarchy order.
pub fn forest_svg(report: &HierarchyReport) -> Result<String> {
    if report.elements.is_empty() {
        return Err(CnmaError::Question("report has no ranked elements".into()));
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for e in &report.elements {
        let [a, b] = e.ci.unwrap_or([e.estimate, e.estimate]);
        lo = lo.min(a).min(e.estimate);
        hi = hi.max(b).max(e.estimate);
    }
    if hi - lo <= f64::EPSILON {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let x = |v: f64| PLOT_LEFT + (v - lo) / (hi - lo) * (PLOT_RIGHT - PLOT_LEFT);
    let n = report.elements.len() as f64;
    let height = TOP + n * ROW + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{LABEL_X}" y="24" font-weight="bold">vs {}</text>"#,
        escape(&report.question.reference)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-weight="bold">Estimate (95% CI)</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{METRIC_X}" y="24" text-anchor="end" font-weight="bold">{}</text>"#,
        report.question.metric.name()
    );
    let zero = x(0.0);
    let bottom = TOP + n * ROW;
    let _ = writeln!(
        s,
        r##"<line x1="{zero:.2}" y1="{:.2}" x2="{zero:.2}" y2="{bottom:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        TOP - 8.0
    );
    for (r, e) in report.elements.iter().enumerate() {
        let y = TOP + r as f64 * ROW + ROW / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{LABEL_X}" y="{:.2}">{}</text>"#,
            y + 4.0,
            escape(&e.label)
        );
        if let Some([a, b]) = e.ci {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                x(a),
                x(b)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="black"/>"#,
            x(e.estimate) - 4.0,
            y - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{METRIC_X}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            y + 4.0,
            e.metric
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{PLOT_LEFT}" y1="{bottom:.2}" x2="{PLOT_RIGHT}" y2="{bottom:.2}" stroke="black"/>"#
    );
    for (v, anchor) in [(lo, "start"), (0.0, "middle"), (hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{v:.2}</text>"#,
            x(v),
            bottom + 16.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(n: usize) -> HierarchyReport {
        HierarchyReport {
            question: QuestionSummary {
                set: vec!["A".into()],
                refined: vec!["A".into()],
                reference: "A".into(),
                metric: Metric::PBest,
                orientation: Orientation::LargerIsBetter,
            },
            elements: (0..n)
                .map(|i| ReportElement {
                    label: format!("T<{i}>"),
                    estimate: -(i as f64) * 0.3,
                    se: 0.1,
                    ci: (i > 0).then_some([-(i as f64) * 0.3 - 0.2, -(i as f64) * 0.3 + 0.2]),
                    metric: 1.0 / (i + 1) as f64,
                    position: i + 1,
                })
                .collect(),
            exclusions: vec![Exclusion {
                label: "Ven".into(),
                reason: "Not estimable".into(),
            }],
            ties: vec![],
            seed: 1,
            n_samples: 10,
            mode: SamplingMode::Joint,
            warnings: vec![],
        }
    }

    #[test]
    fn svg_rows_and_determinism() {
        let r = report(3);
        let a = forest_svg(&r).unwrap();
        assert_eq!(a, forest_svg(&r).unwrap());
        assert_eq!(a.matches("<rect x=").count(), 3);
        assert!(a.contains("T&lt;2&gt;"));
        assert!(forest_svg(&report(0)).is_err());
        assert!(forest_svg(&report(1)).is_ok());
    }

    #[test]
    fn csv_has_exclusion_row() {
        let mut buf = Vec::new();
        report(2).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().ends_with("Not estimable"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn json_round_trip() {
        let r = report(2);
        let back: HierarchyReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
