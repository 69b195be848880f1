//! End-to-end workflow over one network and one model.

use crate::catalog::{derive_component_catalog, ComponentCatalog};
use crate::design::{DesignMatrices, ModelSpec};
use crate::error::{CnmaError, Result};
use crate::estimability::{
    check_set, component_diagnostics, EstimabilityReport, ParameterVerdict, RankTolerance, RowSpace,
};
use crate::fit::{fit, FitResult, WeightModel};
use crate::network::{parse_treatment_label, Network, TreatmentLabel};
use crate::ranking::{
    build_hierarchy, compute_metric, refine_set, sample_effects, EffectSamples, Exclusion,
    HierarchyQuestion, RankingElements, Refinement,
};
use crate::report::HierarchyReport;

/// Which elements make up the set S.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetSelection {
    AllTreatments,
    AllComponents,
    Labels(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub network: Network,
    pub catalog: ComponentCatalog,
    pub spec: ModelSpec,
    pub design: DesignMatrices,
    pub row_space: RowSpace,
}

/// A ranked answer plus the draws it was computed from, when any.
#[derive(Debug, Clone)]
pub struct Answer {
    pub report: HierarchyReport,
    pub samples: Option<EffectSamples>,
}

impl Analysis {
    pub fn new(network: Network, spec: ModelSpec) -> Result<Self> {
        let catalog = derive_component_catalog(&network);
        spec.validate(&catalog)?;
        let design = DesignMatrices::build(&network, &catalog, &spec)?;
        let row_space = RowSpace::new(design.design_f64(), RankTolerance::default());
        Ok(Analysis {
            network,
            catalog,
            spec,
            design,
            row_space,
        })
    }

    pub fn weights(&self) -> Result<WeightModel> {
        WeightModel::from_network(&self.network, self.spec.effects)
    }

    pub fn fit(&self) -> Result<FitResult> {
        fit(
            &self.design.design_f64(),
            &self.network.effects(),
            &self.weights()?,
            &self.design.param_labels,
        )
    }

    /// Rejects a fit produced for a different parameter axis.
    pub fn check_fit(&self, fit: &FitResult) -> Result<()> {
        if fit.param_labels != self.design.param_labels {
            return Err(CnmaError::Dimension(format!(
                "fit parameters {:?} do not match the model {:?}",
                fit.param_labels, self.design.param_labels
            )));
        }
        Ok(())
    }

    pub fn resolve_set(&self, selection: &SetSelection) -> Result<Vec<TreatmentLabel>> {
        let set = match selection {
            SetSelection::AllTreatments => self.catalog.treatments().to_vec(),
            SetSelection::AllComponents => self
                .catalog
                .components()
                .iter()
                .map(|u| TreatmentLabel::from_units(vec![u.clone()]))
                .collect::<Result<_>>()?,
            SetSelection::Labels(labels) => labels
                .iter()
                .map(|l| parse_treatment_label(l))
                .collect::<Result<Vec<_>>>()?,
        };
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = set.iter().find(|t| !seen.insert((*t).clone())) {
            return Err(CnmaError::Question(format!(
                "{dup} appears twice in the set"
            )));
        }
        if set.is_empty() {
            return Err(CnmaError::Question("the set is empty".into()));
        }
        Ok(set)
    }

    /// Uses the observed spelling of a label when it names an observed treatment.
    pub fn resolve_label(&self, text: &str) -> Result<TreatmentLabel> {
        let t = parse_treatment_label(text)?;
        Ok(self.catalog.observed(&t).cloned().unwrap_or(t))
    }

    pub fn check(
        &self,
        set: &[TreatmentLabel],
        reference: &TreatmentLabel,
    ) -> Result<EstimabilityReport> {
        check_set(&self.row_space, set, reference, &self.catalog, &self.spec)
    }

    pub fn diagnostics(&self) -> Result<Vec<ParameterVerdict>> {
        component_diagnostics(&self.row_space, &self.catalog, &self.spec)
    }

    pub fn refine(&self, set: &[TreatmentLabel], reference: &TreatmentLabel) -> Result<Refinement> {
        refine_set(&self.row_space, set, reference, &self.catalog, &self.spec)
    }

    pub fn elements(&self, question: &HierarchyQuestion) -> Result<RankingElements> {
        RankingElements::new(
            &question.refined,
            &question.reference,
            &self.row_space,
            &self.catalog,
            &self.spec,
        )
    }

    /// Computes the metric over S* and assembles the report.
    ///
    /// `external` replaces resampling for sample-based metrics.
    pub fn answer(
        &self,
        fit: &FitResult,
        question: &HierarchyQuestion,
        exclusions: Vec<Exclusion>,
        external: Option<EffectSamples>,
    ) -> Result<Answer> {
        question.validate()?;
        self.check_fit(fit)?;
        let elements = self.elements(question)?;
        let samples = match (question.metric.needs_samples(), external) {
            (false, _) => None,
            (true, Some(s)) => Some(s),
            (true, None) => Some(sample_effects(
                fit,
                &elements,
                question.n_samples,
                question.seed,
                question.mode,
            )?),
        };
        let values = compute_metric(
            question.metric,
            fit,
            &elements,
            samples.as_ref(),
            question.orientation,
        )?;
        let hierarchy = build_hierarchy(&values.values, question.metric, question.orientation);
        let mut warnings = fit.warnings.clone();
        warnings.extend(values.warnings);
        let report = HierarchyReport::assemble(
            question,
            &elements,
            fit,
            &values.values,
            &hierarchy,
            exclusions,
            warnings,
        )?;
        Ok(Answer { report, samples })
    }
}
