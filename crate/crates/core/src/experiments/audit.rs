//! The extensibility audit: apply one config-only mutator to every
//! experiment and check that nothing but configs changed.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    golden_diff, replace_config, serialize_golden, ConfigNode, ConfigPath, ReplaceReport,
};
use crate::runtime::ModuleRegistry;

use super::run::prepare;
use super::{ComposerError, Result};

/// A feature integrated purely through config-tree operations.
pub trait Feature: Sync {
    fn name(&self) -> &str;

    /// Registry changes the feature needs. Built-in features need none; any
    /// change shows up as a digest mismatch.
    fn prepare(&self, _registry: &mut ModuleRegistry) {}

    fn mutate(&self, registry: &ModuleRegistry, cfg: &ConfigNode) -> Result<(ConfigNode, ReplaceReport)>;
}

/// Replaces every FeedForward with an MoE of `num_experts` experts.
pub struct MoeFeature {
    pub num_experts: i64,
    pub top_k: i64,
}

impl Default for MoeFeature {
    fn default() -> Self {
        Self {
            num_experts: 4,
            top_k: 2,
        }
    }
}

impl Feature for MoeFeature {
    fn name(&self) -> &str {
        "moe"
    }

    fn mutate(&self, registry: &ModuleRegistry, cfg: &ConfigNode) -> Result<(ConfigNode, ReplaceReport)> {
        let template = registry
            .default_config("MoE")?
            .with_fields([("num_experts", self.num_experts), ("top_k", self.top_k)])?;
        Ok(replace_config(registry.configs(), cfg, &["FeedForward"], &template)?)
    }
}

/// Replaces every NoPos slot with rotary embeddings.
pub struct RopeFeature;

impl Feature for RopeFeature {
    fn name(&self) -> &str {
        "rope"
    }

    fn mutate(&self, registry: &ModuleRegistry, cfg: &ConfigNode) -> Result<(ConfigNode, ReplaceReport)> {
        let template = registry.default_config("RoPE")?;
        Ok(replace_config(registry.configs(), cfg, &["NoPos"], &template)?)
    }
}

pub fn feature_by_name(name: &str) -> Option<Box<dyn Feature>> {
    match name {
        "moe" => Some(Box::new(MoeFeature::default())),
        "rope" => Some(Box::new(RopeFeature)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentAudit {
    pub experiment: String,
    pub replaced_paths: Vec<String>,
    /// Golden paths that differ between the original and mutated config.
    pub diff_paths: Vec<String>,
    /// Every differing path lies under a replaced node, and every replaced
    /// node differs.
    pub encapsulated: bool,
    pub loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub feature: String,
    pub num_experiments: usize,
    /// Registered layer kinds.
    pub num_modules: usize,
    /// Feature variants applied.
    pub num_variants: usize,
    pub nodes_replaced: usize,
    pub mutators_used: usize,
    pub module_registry_digest_before: String,
    pub module_registry_digest_after: String,
    pub experiments: Vec<ExperimentAudit>,
    pub passed: bool,
}

impl AuditReport {
    /// The first failure as an error.
    pub fn check(&self) -> Result<()> {
        if self.module_registry_digest_before != self.module_registry_digest_after {
            return Err(ComposerError::MutatedCode {
                before: self.module_registry_digest_before.clone(),
                after: self.module_registry_digest_after.clone(),
            });
        }
        for e in &self.experiments {
            if let Some(reason) = &e.error {
                return Err(ComposerError::BrokenConfig {
                    experiment: e.experiment.clone(),
                    reason: reason.clone(),
                });
            }
            if !e.encapsulated {
                return Err(ComposerError::AuditFailed(format!(
                    "'{}' changed paths outside the replaced nodes",
                    e.experiment
                )));
            }
        }
        Ok(())
    }
}

/// True when `path` is `root` or lies under it.
pub fn is_under(path: &str, root: &str) -> bool {
    path == root
        || path
            .strip_prefix(root)
            .is_some_and(|rest| rest.starts_with('.') || rest.starts_with('['))
}

/// Replaced roots touched by the diff, or `None` when some differing path
/// lies outside every replaced root.
pub fn diff_roots(diff_paths: &[String], replaced: &[String]) -> Option<BTreeSet<String>> {
    let mut roots = BTreeSet::new();
    for p in diff_paths {
        let root = replaced.iter().find(|r| is_under(p, r))?;
        roots.insert(root.clone());
    }
    Some(roots)
}

fn audit_one(
    registry: &ModuleRegistry,
    name: &str,
    cfg: &ConfigNode,
    feature: &dyn Feature,
) -> ExperimentAudit {
    let mut out = ExperimentAudit {
        experiment: name.to_string(),
        replaced_paths: Vec::new(),
        diff_paths: Vec::new(),
        encapsulated: false,
        loss: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let before = serialize_golden(cfg);
        let (mutated, report) = feature.mutate(registry, cfg)?;
        out.replaced_paths = report.replaced_paths.iter().map(ConfigPath::to_string).collect();
        let after = serialize_golden(&mutated);
        out.diff_paths = golden_diff(&before, &after)?.into_iter().map(|d| d.path).collect();
        let replaced: BTreeSet<String> = out.replaced_paths.iter().cloned().collect();
        out.encapsulated = diff_roots(&out.diff_paths, &out.replaced_paths)
            .is_some_and(|roots| roots == replaced);
        let prepared = prepare(registry, &mutated, 0)?;
        let (loss, _) = prepared.step(0, 2, 8)?;
        if !loss.is_finite() {
            return Err(ComposerError::BrokenConfig {
                experiment: name.to_string(),
                reason: format!("non-finite loss {loss}"),
            });
        }
        out.loss = Some(loss);
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(format!("{}: {e}", e.code()));
    }
    out
}

/// Applies `feature` to every experiment in parallel, instantiates each
/// mutated config and runs one forward step.
pub fn audit(
    registry: &ModuleRegistry,
    experiments: &[(String, ConfigNode)],
    feature: &dyn Feature,
) -> AuditReport {
    let digest_before = registry.digest();
    let mut working = registry.clone();
    feature.prepare(&mut working);
    let digest_after = working.digest();

    let results: Vec<ExperimentAudit> = experiments
        .par_iter()
        .map(|(name, cfg)| audit_one(&working, name, cfg, feature))
        .collect();
    let nodes_replaced = results.iter().map(|r| r.replaced_paths.len()).sum();
    let passed = digest_before == digest_after
        && results.iter().all(|r| r.error.is_none() && r.encapsulated);
    AuditReport {
        feature: feature.name().to_string(),
        num_experiments: experiments.len(),
        num_modules: registry.num_layer_kinds(),
        num_variants: 1,
        nodes_replaced,
        mutators_used: 1,
        module_registry_digest_before: digest_before,
        module_registry_digest_after: digest_after,
        experiments: results,
        passed,
    }
}
