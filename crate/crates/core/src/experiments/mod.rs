//! Experiment registry and the operations the command line exposes:
//! compose, run and audit.

mod audit;
mod builders;
mod compose;
mod error;
mod run;

pub use audit::{
    audit, diff_roots, feature_by_name, is_under, AuditReport, ExperimentAudit, Feature,
    MoeFeature, RopeFeature,
};
pub use builders::{
    all_experiments, build, build_experiment, default_mesh_rules, experiment_names, recipes,
    Hidden, Recipe,
};
pub use compose::{compose, load_registry_dir, load_rules, write_registry_dir};
pub use error::{ComposerError, Result};
pub use run::{prepare, run, synthetic_batch, vocab_size, Prepared, RunOptions, RunSummary, StepSummary};
