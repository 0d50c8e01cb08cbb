use std::collections::BTreeMap;

use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue, ValueKind};
use crate::runtime::{dim, layer_dtype_bytes, Result, RuntimeError, Workload};
use crate::tensor::Tensor;

use super::ops::Activation;

pub const REMAT_FIELD: &str = "remat_policy";

/// Adds the fields shared by matmul-bearing layers.
pub(crate) fn sharded(schema: ComponentSchema) -> ComponentSchema {
    schema
        .field("param_partition_spec", ValueKind::Sequence, Vec::<ConfigValue>::new())
        .field("dtype", ValueKind::Text, "f32")
        .field(REMAT_FIELD, ValueKind::Mapping, ConfigValue::Mapping(BTreeMap::new()))
}

/// Writes `value` into `child.field` when the child exists and declares that
/// field. Children that do not take the value are left alone.
pub(crate) fn propagate(
    cfg: &mut ConfigNode,
    child: &ConfigPath,
    field: &str,
    value: impl Into<ConfigValue>,
) -> Result<()> {
    let takes = cfg
        .node_at(child)
        .is_some_and(|n| n.schema().field_schema(field).is_some());
    if takes {
        cfg.set_path(&child.field(field), value.into())?;
    }
    Ok(())
}

pub(crate) fn activation_of(cfg: &ConfigNode) -> Result<Activation> {
    let bad = || RuntimeError::InvalidConfig {
        path: "activation".into(),
        reason: "expected a name or a pair of names".into(),
    };
    match cfg.get("activation").ok_or_else(bad)? {
        ConfigValue::Sequence(items) => {
            let names = items
                .iter()
                .map(|v| v.as_text().ok_or_else(bad))
                .collect::<Result<Vec<_>>>()?;
            Activation::from_names(&names)
        }
        v => Activation::from_names(&[v.as_text().ok_or_else(bad)?]),
    }
}

pub(crate) fn tokens(work: &Workload) -> u128 {
    work.tokens()
}

pub(crate) fn dim128(cfg: &ConfigNode, field: &str) -> Result<u128> {
    Ok(dim(cfg, field)? as u128)
}

pub(crate) fn bytes(cfg: &ConfigNode) -> Result<u128> {
    layer_dtype_bytes(cfg)
}

/// The single input of a layer with one input and one output.
pub(crate) fn single(inputs: Vec<Tensor>, kind: &str) -> Result<Tensor> {
    let n = inputs.len();
    let mut it = inputs.into_iter();
    match (it.next(), n) {
        (Some(x), 1) => Ok(x),
        _ => Err(RuntimeError::Shape(format!("{kind} takes 1 input, got {n}"))),
    }
}

pub(crate) fn check_last_dim(x: &Tensor, expected: usize, kind: &str) -> Result<()> {
    if x.last_dim() != expected {
        return Err(RuntimeError::Shape(format!(
            "{kind} expects last dim {expected}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}
