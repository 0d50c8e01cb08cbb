use crate::config::{ComponentSchema, ConfigNode, ValueKind};
use crate::mesh::PartitionSpec;
use crate::runtime::{dim, param, Layer, ModuleTree, ParamInit, ParamSpec, Result};
use crate::tensor::Tensor;

use super::common::single;
use super::ops::rmsnorm_forward;

pub const DEFAULT_EPS: f64 = 1e-6;

pub struct RmsNorm;

impl Layer for RmsNorm {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("RMSNorm")
            .required("input_dim", ValueKind::Int)
            .field("eps", ValueKind::Float, DEFAULT_EPS)
    }

    fn source(&self) -> &'static str {
        include_str!("norm.rs")
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        Ok(vec![scale_param("scale", dim(cfg, "input_dim")?)])
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let x = single(inputs, "RMSNorm")?;
        let eps = module.config().float("eps").unwrap_or(DEFAULT_EPS);
        Ok(vec![rmsnorm_forward(&x, &param("scale")?, eps)?])
    }
}

/// A replicated, ones-initialized norm scale.
pub(crate) fn scale_param(name: &str, d: usize) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: vec![d],
        partition: PartitionSpec::replicated(1),
        init: ParamInit::Ones,
    }
}
