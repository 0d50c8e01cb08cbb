//! The built-in experiments: small decoder-only language models that differ
//! in dims, activations, kernels, dtypes, sharding and optimizer settings.

use std::collections::BTreeMap;

use crate::config::{ConfigNode, ConfigValue};
use crate::layers::{adamw_config, scaled_hidden_dim_spec};
use crate::mesh::{ConfigModifier, MeshRule, RematPolicy};
use crate::runtime::ModuleRegistry;

use super::{ComposerError, Result};

#[derive(Debug, Clone, Copy)]
pub enum Hidden {
    Scaled(f64),
    Fixed(i64),
}

#[derive(Debug, Clone)]
pub struct Recipe {
    pub name: &'static str,
    pub vocab: i64,
    pub dim: i64,
    pub heads: i64,
    pub layers: usize,
    pub hidden: Hidden,
    pub activation: &'static [&'static str],
    pub kernel: &'static str,
    pub causal: bool,
    pub tied: bool,
    pub dtype: &'static str,
    pub sharded: bool,
    pub moe: Option<(i64, i64)>,
    pub offload_optimizer: bool,
    pub optimizer_multiplier: i64,
    pub learning_rate: f64,
    pub norm_eps: f64,
}

const GATED_SILU: &[&str] = &["linear", "nn.silu"];

impl Recipe {
    const fn base(name: &'static str) -> Self {
        Self {
            name,
            vocab: 128,
            dim: 96,
            heads: 4,
            layers: 2,
            hidden: Hidden::Scaled(8.0 / 3.0),
            activation: GATED_SILU,
            kernel: "xla",
            causal: true,
            tied: false,
            dtype: "f32",
            sharded: true,
            moe: None,
            offload_optimizer: false,
            optimizer_multiplier: 2,
            learning_rate: 3e-4,
            norm_eps: 1e-6,
        }
    }
}

pub fn recipes() -> Vec<Recipe> {
    let b = Recipe::base;
    vec![
        b("txf_base"),
        Recipe { hidden: Hidden::Fixed(384), activation: &["nn.gelu"], ..b("txf_gelu") },
        Recipe { dim: 64, hidden: Hidden::Fixed(256), activation: &["nn.relu"], ..b("txf_relu") },
        Recipe { dim: 144, heads: 8, vocab: 256, ..b("txf_wide") },
        Recipe { dim: 48, heads: 2, ..b("txf_narrow") },
        Recipe { heads: 8, ..b("txf_heads8") },
        Recipe { tied: true, ..b("txf_tied") },
        Recipe { kernel: "flash", ..b("txf_flash") },
        Recipe { causal: false, ..b("txf_bidirectional") },
        Recipe { dtype: "bf16", ..b("txf_bf16") },
        Recipe { sharded: false, ..b("txf_replicated") },
        Recipe { offload_optimizer: true, ..b("txf_offload_opt") },
        Recipe { vocab: 64, ..b("txf_small_vocab") },
        Recipe { vocab: 512, ..b("txf_large_vocab") },
        Recipe { hidden: Hidden::Fixed(256), activation: &["nn.tanh"], ..b("txf_tanh") },
        Recipe { activation: &["linear", "nn.gelu"], ..b("txf_geglu") },
        Recipe { norm_eps: 1e-5, learning_rate: 1e-3, ..b("txf_eps") },
        Recipe { optimizer_multiplier: 1, ..b("txf_momentum_free") },
        Recipe { hidden: Hidden::Fixed(256), moe: Some((4, 2)), ..b("moe_base") },
        Recipe { hidden: Hidden::Fixed(256), moe: Some((8, 1)), ..b("moe_top1") },
    ]
}

pub fn experiment_names() -> Vec<&'static str> {
    recipes().iter().map(|r| r.name).collect()
}

/// The mesh rules every built-in experiment carries.
pub fn default_mesh_rules() -> Vec<MeshRule> {
    let policy = |name: &str| RematPolicy::preset(name).expect("known preset");
    let layer = "model.decoder.transformer.layer".to_string();
    vec![
        MeshRule::new(
            "tpu-v5e-256-*",
            vec![
                ConfigModifier::MeshShape(BTreeMap::from([
                    ("data".to_string(), -1),
                    ("fsdp".to_string(), 256),
                ])),
                ConfigModifier::RematSpec(BTreeMap::from([(layer.clone(), policy("offload_dots"))])),
                ConfigModifier::DtypePolicy {
                    dtype: "int8".into(),
                    params: BTreeMap::new(),
                },
            ],
        ),
        MeshRule::new(
            "gpu-H100-*",
            vec![
                ConfigModifier::MeshShape(BTreeMap::from([
                    ("fsdp".to_string(), -1),
                    ("model".to_string(), 8),
                ])),
                ConfigModifier::RematSpec(BTreeMap::from([(layer, policy("save_qkvoflash"))])),
                ConfigModifier::DtypePolicy {
                    dtype: "fp8".into(),
                    params: BTreeMap::from([(
                        "fp8_amax_history_length".to_string(),
                        ConfigValue::from(128i64),
                    )]),
                },
            ],
        ),
    ]
}

fn spec(sharded: bool) -> ConfigValue {
    if sharded {
        vec!["fsdp", "model"].into()
    } else {
        ConfigValue::Sequence(Vec::new())
    }
}

pub fn build(registry: &ModuleRegistry, r: &Recipe) -> Result<ConfigNode> {
    let d = |kind: &str| registry.default_config(kind);
    let attention = d("Attention")?.with_fields([
        ("num_heads", ConfigValue::from(r.heads)),
        ("kernel", r.kernel.into()),
        ("causal", r.causal.into()),
        ("param_partition_spec", spec(r.sharded)),
        ("dtype", r.dtype.into()),
    ])?;
    let activation: ConfigValue = match r.activation {
        [one] => (*one).into(),
        many => many.to_vec().into(),
    };
    let hidden: ConfigValue = match r.hidden {
        Hidden::Scaled(s) => scaled_hidden_dim_spec(s).into(),
        Hidden::Fixed(h) => h.into(),
    };
    let ffn = match r.moe {
        None => d("FeedForward")?,
        Some((experts, k)) => d("MoE")?.with_fields([("num_experts", experts), ("top_k", k)])?,
    }
    .with_fields([
        ("hidden_dim", hidden),
        ("activation", activation),
        ("param_partition_spec", spec(r.sharded)),
        ("dtype", r.dtype.into()),
    ])?;
    let layer = d("TransformerLayer")?.with_fields([
        ("self_attention", ConfigValue::from(attention)),
        ("feed_forward", ffn.into()),
        ("norm_eps", r.norm_eps.into()),
    ])?;
    let stack = d("StackedTransformer")?.set(
        "layer",
        ConfigValue::Sequence(vec![ConfigValue::from(layer); r.layers]),
    )?;
    let mut model = d("CausalLm")?.with_fields([
        ("vocab_size", ConfigValue::from(r.vocab)),
        ("dim", r.dim.into()),
        ("decoder.transformer", stack.into()),
        ("decoder.norm_eps", r.norm_eps.into()),
        ("lm_head.param_partition_spec", spec(r.sharded)),
        ("lm_head.dtype", r.dtype.into()),
        ("embedding.dtype", r.dtype.into()),
    ])?;
    if r.tied {
        model.set_in_place("lm_head.tied_embedding_path", "model.embedding")?;
    }
    let rules = default_mesh_rules()
        .iter()
        .map(|rule| rule.to_config(registry.configs()).map(ConfigValue::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(d("Trainer")?.with_fields([
        ("model", ConfigValue::from(model)),
        ("optimizer", adamw_config(registry, r.learning_rate)?.into()),
        ("mesh_rules", ConfigValue::Sequence(rules)),
        ("optimizer_state_multiplier", r.optimizer_multiplier.into()),
        ("offload_optimizer_state", r.offload_optimizer.into()),
    ])?)
}

pub fn build_experiment(registry: &ModuleRegistry, name: &str) -> Result<ConfigNode> {
    let recipe = recipes()
        .into_iter()
        .find(|r| r.name == name)
        .ok_or_else(|| ComposerError::UnknownExperiment(name.to_string()))?;
    build(registry, &recipe)
}

/// Every built-in experiment, by name.
pub fn all_experiments(registry: &ModuleRegistry) -> Result<Vec<(String, ConfigNode)>> {
    recipes()
        .iter()
        .map(|r| Ok((r.name.to_string(), build(registry, r)?)))
        .collect()
}
