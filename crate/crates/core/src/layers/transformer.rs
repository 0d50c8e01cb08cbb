use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue, ValueKind};
use crate::runtime::{dim, invoke_child, param, Layer, ModuleTree, ParamSpec, Result};
use crate::tensor::Tensor;

use super::common::{propagate, single, REMAT_FIELD};
use super::norm::{scale_param, DEFAULT_EPS};
use super::ops::rmsnorm_forward;

/// Pre-norm block: `x + attn(norm(x))`, then `h + ffn(norm(h))`.
pub struct TransformerLayer;

impl Layer for TransformerLayer {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("TransformerLayer")
            .required("input_dim", ValueKind::Int)
            .field("norm_eps", ValueKind::Float, DEFAULT_EPS)
            .child("self_attention", "Attention")
            .child("feed_forward", "FeedForward")
            .field(REMAT_FIELD, ValueKind::Mapping, ConfigValue::Mapping(Default::default()))
    }

    fn source(&self) -> &'static str {
        include_str!("transformer.rs")
    }

    fn propagate(&self, cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        let d = dim(cfg, "input_dim")? as i64;
        for child in ["self_attention", "feed_forward"] {
            propagate(cfg, &ConfigPath::root().field(child), "input_dim", d)?;
        }
        Ok(())
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let d = dim(cfg, "input_dim")?;
        Ok(vec![
            scale_param("attention_norm_scale", d),
            scale_param("feed_forward_norm_scale", d),
        ])
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let x = single(inputs, "TransformerLayer")?;
        let eps = module.config().float("norm_eps").unwrap_or(DEFAULT_EPS);
        let normed = rmsnorm_forward(&x, &param("attention_norm_scale")?, eps)?;
        let attn = single(invoke_child("self_attention", vec![normed])?, "self_attention")?;
        let h = x.add(&attn)?;
        let normed = rmsnorm_forward(&h, &param("feed_forward_norm_scale")?, eps)?;
        let ffn = single(invoke_child("feed_forward", vec![normed])?, "feed_forward")?;
        Ok(vec![h.add(&ffn)?])
    }
}

/// Applies each entry of `layer` in order.
pub struct StackedTransformer;

fn num_layers(cfg: &ConfigNode) -> usize {
    cfg.get("layer")
        .and_then(ConfigValue::as_sequence)
        .map_or(0, <[ConfigValue]>::len)
}

impl Layer for StackedTransformer {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("StackedTransformer")
            .required("input_dim", ValueKind::Int)
            .field("layer", ValueKind::ConfigList, Vec::<ConfigValue>::new())
    }

    fn source(&self) -> &'static str {
        include_str!("transformer.rs")
    }

    fn propagate(&self, cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        let d = dim(cfg, "input_dim")? as i64;
        for i in 0..num_layers(cfg) {
            propagate(cfg, &ConfigPath::root().field("layer").index(i), "input_dim", d)?;
        }
        Ok(())
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let mut x = single(inputs, "StackedTransformer")?;
        for i in 0..num_layers(module.config()) {
            x = single(invoke_child(&format!("layer[{i}]"), vec![x])?, "layer")?;
        }
        Ok(vec![x])
    }
}
