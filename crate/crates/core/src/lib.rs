//! Instance-level explanations of tabular black-box models that attribute a
//! prediction to single features and to feature pairs.
//!
//! The [`kernel`] computes expectation-based contributions, the
//! [`explainer`] turns them into ordered explanations and uncertainty
//! reports, [`models`] holds the built-in model zoo and the subprocess
//! bridge, and [`bench`] counts interactions across model families.

pub mod bench;
pub mod cli;
pub mod data;
pub mod dataset;
pub mod error;
pub mod explainer;
pub mod explanation;
pub mod kernel;
pub mod model;
pub mod models;
pub mod render;
pub mod stats;

pub use dataset::{bind_observation, validate_dataset, Dataset, Feature, FeatureKind, Observation, RawTable, RowMatrix, Schema};
pub use error::{Error, ModelError, Result};
pub use explainer::{
    explain_with_order, sequential_explain, shapley_estimate, uncertainty_profile, ExplainConfig,
    Explainer, FeatureOrder, PathPlan, ShapleyMode, TieBreak,
};
pub use explanation::{
    CandidateGroup, Explanation, ExplanationMeta, Group, InteractionMatrix, Step, UncertaintyReport,
};
pub use kernel::{Background, ContributionKernel};
pub use model::{Model, ModelHandle, ModelInfo};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "IBD_WORKERS";

/// Worker count from `IBD_WORKERS`, or 1 when unset or invalid.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1)
}
