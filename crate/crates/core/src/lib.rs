//! Component network meta-analysis: design matrices, estimability, GLS
//! fitting and ranking of treatments and components.

pub mod analysis;
pub mod catalog;
pub mod design;
pub mod error;
pub mod estimability;
pub mod fit;
pub mod linalg;
pub mod network;
pub mod ranking;
pub mod report;

pub use analysis::{Analysis, Answer, SetSelection};
pub use catalog::{derive_component_catalog, ComponentCatalog};
pub use design::{
    build_basic_matrix, build_component_matrix, build_design_matrix, contrast_vector,
    encode_combination, Anchoring, ContrastVector, DesignMatrices, Effects, IntMatrix,
    InteractionTerm, ModelSpec,
};
pub use error::{CnmaError, Result};
pub use estimability::{
    check_set, component_diagnostics, is_estimable, numeric_rank, oracle_residual_estimable,
    EstimabilityReport, RankTolerance, RowSpace,
};
pub use fit::{
    estimate_tau2, fit_common, fit_random, relative_effect, FitResult, RelativeEffect, WeightModel,
};
pub use network::{
    parse_contrast_csv, parse_contrast_reader, parse_treatment_label, validate_network, Contrast,
    Diagnostic, Network, TreatmentLabel, Unit,
};
pub use ranking::{
    build_hierarchy, expected_rank, ingest_samples, median_rank, p_best, p_score, ranks_per_sample,
    sample_effects, sucra, EffectSamples, HierarchyQuestion, Metric, Orientation, RankingElements,
    SamplingMode,
};
pub use report::{forest_svg, HierarchyReport};
