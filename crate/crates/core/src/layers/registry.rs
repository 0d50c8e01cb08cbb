use std::collections::BTreeMap;

use crate::config::{ConfigError, ConfigNode, ConfigValue, FieldSchema, FunctionSpec, Scalar, ValueKind};
use crate::mesh::modifier_schemas;
use crate::runtime::ModuleRegistry;

use super::feed_forward::resolve_scaled_hidden_dim;
use super::{
    Attention, CausalLm, Decoder, Embedding, FeedForward, Linear, LmHead, MoE, NoPos, RmsNorm,
    RoPE, StackedTransformer, Trainer, TransformerLayer,
};

pub const SCALED_HIDDEN_DIM: &str = "scaled_hidden_dim";
pub const ADAMW: &str = "adamw";

/// Optimizer settings produced by the `adamw` factory. Only its
/// configuration matters here; no update is ever applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

fn float_of(values: &indexmap::IndexMap<String, ConfigValue>, key: &str) -> Result<f64, String> {
    values
        .get(key)
        .and_then(ConfigValue::as_float)
        .ok_or_else(|| format!("'{key}' must be a number"))
}

/// Every built-in layer, the rule and modifier components, the
/// `scaled_hidden_dim` function and the `adamw` factory.
pub fn standard_registry() -> ModuleRegistry {
    let mut r = ModuleRegistry::new();
    let built: Result<(), ConfigError> = (|| {
        r.register_layer(Linear)?;
        r.register_layer(RmsNorm)?;
        r.register_layer(FeedForward)?;
        r.register_layer(MoE)?;
        r.register_layer(NoPos)?;
        r.register_layer(RoPE)?;
        r.register_layer(Attention)?;
        r.register_layer(TransformerLayer)?;
        r.register_layer(StackedTransformer)?;
        r.register_layer(Embedding)?;
        r.register_layer(LmHead)?;
        r.register_layer(Decoder)?;
        r.register_layer(CausalLm)?;
        r.register_layer(Trainer)?;
        for schema in modifier_schemas() {
            r.register_data_component(schema)?;
        }
        let configs = r.configs_mut();
        configs.register_function(SCALED_HIDDEN_DIM, resolve_scaled_hidden_dim);
        configs.register_factory(ADAMW, |values| {
            let opt = AdamW {
                learning_rate: float_of(values, "learning_rate")?,
                b1: float_of(values, "b1")?,
                b2: float_of(values, "b2")?,
                eps: float_of(values, "eps")?,
                weight_decay: float_of(values, "weight_decay")?,
            };
            if opt.learning_rate <= 0.0 || opt.eps <= 0.0 {
                return Err("learning_rate and eps must be positive".into());
            }
            Ok(Box::new(opt))
        })?;
        Ok(())
    })();
    built.expect("standard registry is consistent");
    r
}

/// `scaled_hidden_dim(scale)` as a deferred value.
pub fn scaled_hidden_dim_spec(scale: f64) -> FunctionSpec {
    FunctionSpec::new(SCALED_HIDDEN_DIM).arg("scale", Scalar::Float(scale))
}

/// Config for the `adamw` factory with the given learning rate.
pub fn adamw_config(registry: &ModuleRegistry, learning_rate: f64) -> Result<ConfigNode, ConfigError> {
    registry.configs().config_from_factory(
        ADAMW,
        vec![
            FieldSchema::new("learning_rate", ValueKind::Float, learning_rate),
            FieldSchema::new("b1", ValueKind::Float, 0.9),
            FieldSchema::new("b2", ValueKind::Float, 0.95),
            FieldSchema::new("eps", ValueKind::Float, 1e-8),
            FieldSchema::new("weight_decay", ValueKind::Float, 0.0),
        ],
    )
}

/// Empty mapping value, handy for `remat_policy` and similar fields.
pub fn empty_mapping() -> ConfigValue {
    ConfigValue::Mapping(BTreeMap::new())
}
