use std::collections::BTreeMap;

use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue, ValueKind};
use crate::runtime::{add_summary, invoke_child, Layer, ModuleTree, Result, RuntimeError};
use crate::tensor::Tensor;

use super::ops::cross_entropy;

pub const DEFAULT_MESH_AXES: [&str; 4] = ["data", "expert", "fsdp", "model"];

/// Root of an experiment: the model, the optimizer, and the parallelism
/// settings that mesh rules rewrite.
///
/// Forward takes `(ids, targets)` and returns the mean cross-entropy, also
/// recorded as the `loss` summary.
pub struct Trainer;

impl Layer for Trainer {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("Trainer")
            .field("mesh_shape", ValueKind::Sequence, vec![1i64, 1, -1, 1])
            .field("mesh_axis_names", ValueKind::Sequence, DEFAULT_MESH_AXES.to_vec())
            .field("mesh_rules", ValueKind::ConfigList, Vec::<ConfigValue>::new())
            .child("model", "CausalLm")
            .required("optimizer", ValueKind::Config)
            .field("optimizer_state_multiplier", ValueKind::Int, 2i64)
            .field("offload_optimizer_state", ValueKind::Bool, false)
            .field("dtype_policy_params", ValueKind::Mapping, ConfigValue::Mapping(BTreeMap::new()))
    }

    fn source(&self) -> &'static str {
        include_str!("trainer.rs")
    }

    fn validate(&self, cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        let invalid = |path: &str, reason: String| RuntimeError::InvalidConfig {
            path: path.into(),
            reason,
        };
        let shape = mesh_shape(cfg).ok_or_else(|| invalid("mesh_shape", "expected integers".into()))?;
        let axes =
            mesh_axis_names(cfg).ok_or_else(|| invalid("mesh_axis_names", "expected names".into()))?;
        if shape.len() != axes.len() {
            return Err(invalid(
                "mesh_shape",
                format!("{} entries for {} axes", shape.len(), axes.len()),
            ));
        }
        if cfg.int("optimizer_state_multiplier").is_none_or(|m| m < 0) {
            return Err(invalid(
                "optimizer_state_multiplier",
                "expected a nonnegative integer".into(),
            ));
        }
        Ok(())
    }

    fn forward(&self, _module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let n = inputs.len();
        let mut it = inputs.into_iter();
        let (Some(ids), Some(targets), 2) = (it.next(), it.next(), n) else {
            return Err(RuntimeError::Shape(format!("Trainer takes (ids, targets), got {n} inputs")));
        };
        let mut logits = invoke_child("model", vec![ids])?;
        let logits = logits
            .pop()
            .ok_or_else(|| RuntimeError::Shape("model returned nothing".into()))?;
        let targets: Vec<usize> = targets.data().iter().map(|&t| t as usize).collect();
        let loss = cross_entropy(&logits, &targets)?;
        add_summary("loss", loss)?;
        Ok(vec![Tensor::filled(&[1], loss)])
    }
}

pub fn mesh_shape(cfg: &ConfigNode) -> Option<Vec<i64>> {
    cfg.get("mesh_shape")?
        .as_sequence()?
        .iter()
        .map(ConfigValue::as_int)
        .collect()
}

pub fn mesh_axis_names(cfg: &ConfigNode) -> Option<Vec<String>> {
    cfg.get("mesh_axis_names")?
        .as_sequence()?
        .iter()
        .map(|v| v.as_text().map(str::to_string))
        .collect()
}
