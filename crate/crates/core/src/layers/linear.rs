use crate::config::{ComponentSchema, ConfigNode, ValueKind};
use crate::mesh::infer_bias_spec;
use crate::runtime::{
    dim, param, partition_field, Layer, ModuleTree, ParamInit, ParamSpec, RematTag, Result,
    Workload,
};
use crate::tensor::Tensor;

use super::common::{bytes, check_last_dim, dim128, sharded, single, tokens};
use super::ops::linear_forward;

/// `y = x·W + b`, with the bias sharded like the weight's output dimension.
pub struct Linear;

impl Layer for Linear {
    fn schema(&self) -> ComponentSchema {
        sharded(
            ComponentSchema::new("Linear")
                .required("input_dim", ValueKind::Int)
                .required("output_dim", ValueKind::Int)
                .field("bias", ValueKind::Bool, true),
        )
    }

    fn source(&self) -> &'static str {
        include_str!("linear.rs")
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let (i, o) = (dim(cfg, "input_dim")?, dim(cfg, "output_dim")?);
        let spec = partition_field(cfg, 2)?;
        let mut out = vec![ParamSpec {
            name: "weight".into(),
            shape: vec![i, o],
            partition: spec.clone(),
            init: ParamInit::FanInUniform(i),
        }];
        if cfg.bool("bias").unwrap_or(true) {
            out.push(ParamSpec {
                name: "bias".into(),
                shape: vec![o],
                partition: infer_bias_spec(&spec),
                init: ParamInit::Zeros,
            });
        }
        Ok(out)
    }

    fn remat_tags(&self, cfg: &ConfigNode, work: &Workload) -> Result<Vec<RematTag>> {
        let n = tokens(work);
        let o = dim128(cfg, "output_dim")?;
        Ok(vec![RematTag {
            name: "output".into(),
            bytes: n * o * bytes(cfg)?,
            recompute_flops: self.flops(cfg, work)?,
        }])
    }

    fn flops(&self, cfg: &ConfigNode, work: &Workload) -> Result<u128> {
        Ok(2 * tokens(work) * dim128(cfg, "input_dim")? * dim128(cfg, "output_dim")?)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let x = single(inputs, "Linear")?;
        check_last_dim(&x, dim(module.config(), "input_dim")?, "Linear")?;
        let w = param("weight")?;
        let b = if module.config().bool("bias").unwrap_or(true) {
            Some(param("bias")?)
        } else {
            None
        };
        Ok(vec![linear_forward(&x, &w, b.as_ref())?])
    }
}
