use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue};
use crate::mesh::PartitionSpec;
use crate::tensor::Tensor;

use super::{ModuleTree, Result, RuntimeError};

/// Batch and sequence sizes that metadata formulas are evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    pub batch: u64,
    pub seq_len: u64,
}

impl Workload {
    pub fn new(batch: u64, seq_len: u64) -> Self {
        Self { batch, seq_len }
    }

    pub fn tokens(&self) -> u128 {
        self.batch as u128 * self.seq_len as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamInit {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    FanInUniform(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub partition: PartitionSpec,
    pub init: ParamInit,
}

/// A named activation where the save/recompute/offload decision is made.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RematTag {
    pub name: String,
    /// Bytes held if the activation is saved for the backward pass.
    pub bytes: u128,
    /// Forward flops repeated if the activation is recomputed instead.
    pub recompute_flops: u128,
}

/// Static description of a layer at a given config and workload.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetadata {
    pub params: Vec<ParamSpec>,
    pub remat_tags: Vec<RematTag>,
    /// Forward flops of this layer alone, children excluded.
    pub flops: u128,
}

/// Behavior bound to a component kind.
///
/// Forwards read parameters and call children through the ambient
/// invocation context (see [`crate::runtime::context`]); they never hold
/// references to other modules.
pub trait Layer: Send + Sync {
    fn schema(&self) -> ComponentSchema;

    /// Source text of the behavior, hashed into the registry digest.
    fn source(&self) -> &'static str;

    /// Parent-to-child propagation, run before children are instantiated.
    fn propagate(&self, _cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        Ok(())
    }

    /// Checks on the node's own (resolved) fields.
    fn validate(&self, _cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        Ok(())
    }

    fn params(&self, _cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        Ok(Vec::new())
    }

    fn remat_tags(&self, _cfg: &ConfigNode, _work: &Workload) -> Result<Vec<RematTag>> {
        Ok(Vec::new())
    }

    fn flops(&self, _cfg: &ConfigNode, _work: &Workload) -> Result<u128> {
        Ok(0)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>>;

    fn metadata(&self, cfg: &ConfigNode, work: &Workload) -> Result<LayerMetadata> {
        Ok(LayerMetadata {
            params: self.params(cfg)?,
            remat_tags: self.remat_tags(cfg, work)?,
            flops: self.flops(cfg, work)?,
        })
    }
}

/// Reads a positive integer field.
pub fn dim(cfg: &ConfigNode, field: &str) -> Result<usize> {
    match cfg.get(field) {
        Some(ConfigValue::Scalar(crate::config::Scalar::Int(v))) if *v > 0 => Ok(*v as usize),
        other => Err(RuntimeError::InvalidConfig {
            path: field.to_string(),
            reason: format!("expected a positive integer, found {other:?}"),
        }),
    }
}

/// Storage bytes per element for a `dtype` tag.
pub fn dtype_bytes(tag: &str) -> Option<u128> {
    match tag {
        "f32" => Some(4),
        "bf16" => Some(2),
        "int8" | "fp8" => Some(1),
        _ => None,
    }
}

/// Element size of the layer's `dtype` field, `f32` when absent.
pub fn layer_dtype_bytes(cfg: &ConfigNode) -> Result<u128> {
    let tag = cfg.text("dtype").unwrap_or("f32");
    dtype_bytes(tag).ok_or_else(|| RuntimeError::InvalidConfig {
        path: "dtype".into(),
        reason: format!("unknown dtype '{tag}'"),
    })
}

/// Reads the layer's `param_partition_spec`; empty means replicated.
pub fn partition_field(cfg: &ConfigNode, rank: usize) -> Result<PartitionSpec> {
    let Some(value) = cfg.get("param_partition_spec") else {
        return Ok(PartitionSpec::replicated(rank));
    };
    let spec = PartitionSpec::from_config(value).ok_or_else(|| RuntimeError::InvalidConfig {
        path: "param_partition_spec".into(),
        reason: "expected a sequence of axis names".into(),
    })?;
    match spec.rank() {
        0 => Ok(PartitionSpec::replicated(rank)),
        r if r == rank => Ok(spec),
        r => Err(RuntimeError::InvalidConfig {
            path: "param_partition_spec".into(),
            reason: format!("spec of rank {r} for weights of rank {rank}"),
        }),
    }
}
