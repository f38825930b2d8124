//! Diagnostic experiments on trained parsers: parent-label and word-feature
//! probes, gradient decay with distance, and encoder and lexical
//! comparisons.

mod derivatives;
mod experiments;
mod features;
mod head;
mod parent;

pub use derivatives::{derivative_by_distance, DerivativeBuckets};
pub use experiments::{
    ablation_csv, context_csv, context_experiment, context_grid, lexical_ablation, train_and_score, AblationResult,
    GridResult, ABLATION_CSV_HEADER, CONTEXT_CSV_HEADER, CONTEXT_WINDOWS,
};
pub use features::{
    feature_csv, probe_vocabulary, word_feature_probe, word_features, FeatureProbeConfig, FeatureResult, FeatureTest,
    WordFeature, FEATURE_CSV_HEADER,
};
pub use head::{argmax, binary_hinge, multiclass_margin, ProbeHead};
pub use parent::{majority_baseline, parent_examples, parent_probe, ParentProbeConfig, ParentProbeReport, TOP};
