use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue, ValueKind};
use crate::runtime::{
    dim, param, partition_field, Layer, ModuleTree, ParamInit, ParamSpec, RematTag, Result,
    Workload,
};
use crate::tensor::Tensor;

use super::common::{activation_of, bytes, check_last_dim, sharded, single, tokens};
use super::ops::{feed_forward_forward, Activation, FeedForwardWeights};

/// Two-layer MLP. A pair activation such as `("linear", "nn.silu")` makes it
/// gated: `linear2((linear1_0·x) ⊙ silu(linear1_1·x))`.
pub struct FeedForward;

pub(crate) fn linear1_name(i: usize) -> String {
    format!("linear1_{i}")
}

impl Layer for FeedForward {
    fn schema(&self) -> ComponentSchema {
        sharded(
            ComponentSchema::new("FeedForward")
                .required("input_dim", ValueKind::Int)
                .required("hidden_dim", ValueKind::Int)
                .field("activation", ValueKind::Any, "nn.relu"),
        )
    }

    fn source(&self) -> &'static str {
        include_str!("feed_forward.rs")
    }

    fn validate(&self, cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        activation_of(cfg)?;
        dim(cfg, "input_dim")?;
        dim(cfg, "hidden_dim")?;
        Ok(())
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let (d, h) = (dim(cfg, "input_dim")?, dim(cfg, "hidden_dim")?);
        let spec = partition_field(cfg, 2)?;
        let mut out: Vec<ParamSpec> = (0..activation_of(cfg)?.branches())
            .map(|i| ParamSpec {
                name: linear1_name(i),
                shape: vec![d, h],
                partition: spec.clone(),
                init: ParamInit::FanInUniform(d),
            })
            .collect();
        out.push(ParamSpec {
            name: "linear2".into(),
            shape: vec![h, d],
            partition: spec.reversed(),
            init: ParamInit::FanInUniform(h),
        });
        Ok(out)
    }

    fn remat_tags(&self, cfg: &ConfigNode, work: &Workload) -> Result<Vec<RematTag>> {
        mlp_tags(cfg, tokens(work), activation_of(cfg)?)
    }

    fn flops(&self, cfg: &ConfigNode, work: &Workload) -> Result<u128> {
        mlp_flops(cfg, tokens(work), activation_of(cfg)?)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let cfg = module.config();
        let x = single(inputs, "FeedForward")?;
        check_last_dim(&x, dim(cfg, "input_dim")?, "FeedForward")?;
        let activation = activation_of(cfg)?;
        let weights = FeedForwardWeights {
            linear1: (0..activation.branches())
                .map(|i| Ok((param(&linear1_name(i))?, None)))
                .collect::<Result<_>>()?,
            linear2: (param("linear2")?, None),
        };
        Ok(vec![feed_forward_forward(&x, &weights, activation)?])
    }
}

/// Tags of an MLP applied to `n` token rows.
pub(crate) fn mlp_tags(cfg: &ConfigNode, n: u128, act: Activation) -> Result<Vec<RematTag>> {
    let (d, h) = (dim(cfg, "input_dim")? as u128, dim(cfg, "hidden_dim")? as u128);
    let b = bytes(cfg)?;
    let mut tags: Vec<RematTag> = (0..act.branches())
        .map(|i| RematTag {
            name: linear1_name(i),
            bytes: n * h * b,
            recompute_flops: 2 * n * d * h,
        })
        .collect();
    tags.push(RematTag {
        name: "linear2".into(),
        bytes: n * d * b,
        recompute_flops: 2 * n * h * d,
    });
    Ok(tags)
}

pub(crate) fn mlp_flops(cfg: &ConfigNode, n: u128, act: Activation) -> Result<u128> {
    let (d, h) = (dim(cfg, "input_dim")? as u128, dim(cfg, "hidden_dim")? as u128);
    Ok((act.branches() as u128 + 1) * 2 * n * d * h)
}

/// `round(input_dim · scale)`, halves away from zero.
pub fn scaled_hidden_dim(input_dim: i64, scale: f64) -> i64 {
    (input_dim as f64 * scale).round() as i64
}

pub(crate) fn resolve_scaled_hidden_dim(
    spec: &crate::config::FunctionSpec,
    owner: &ConfigNode,
) -> std::result::Result<ConfigValue, String> {
    let scale = spec
        .float_arg("scale")
        .ok_or_else(|| "scaled_hidden_dim needs a numeric 'scale'".to_string())?;
    let input_dim = owner
        .int("input_dim")
        .ok_or_else(|| "scaled_hidden_dim needs input_dim to be set first".to_string())?;
    Ok(ConfigValue::from(scaled_hidden_dim(input_dim, scale)))
}
