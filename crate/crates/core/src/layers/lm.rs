use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ValueKind};
use crate::runtime::{
    dim, get_shared_state, invoke_child, param, partition_field, Layer, ModuleTree, ParamInit,
    ParamSpec, RematTag, Result, RuntimeError, Workload,
};
use crate::tensor::Tensor;

use super::common::{bytes, check_last_dim, dim128, propagate, sharded, single, tokens};
use super::norm::{scale_param, DEFAULT_EPS};
use super::ops::{linear_forward, rmsnorm_forward};

/// Token-id lookup. Ids arrive as a float tensor `[..., T]`.
pub struct Embedding;

impl Layer for Embedding {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("Embedding")
            .required("vocab_size", ValueKind::Int)
            .required("dim", ValueKind::Int)
            .field("param_partition_spec", ValueKind::Sequence, Vec::<crate::config::ConfigValue>::new())
            .field("dtype", ValueKind::Text, "f32")
    }

    fn source(&self) -> &'static str {
        include_str!("lm.rs")
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let (v, d) = (dim(cfg, "vocab_size")?, dim(cfg, "dim")?);
        Ok(vec![ParamSpec {
            name: "weight".into(),
            shape: vec![v, d],
            partition: partition_field(cfg, 2)?,
            init: ParamInit::FanInUniform(d),
        }])
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let ids = single(inputs, "Embedding")?;
        let (v, d) = (dim(module.config(), "vocab_size")?, dim(module.config(), "dim")?);
        let table = param("weight")?;
        let mut rows = Vec::with_capacity(ids.numel() * d);
        for &id in ids.data() {
            if id < 0.0 || id.fract() != 0.0 || id as usize >= v {
                return Err(RuntimeError::Shape(format!("token id {id} outside vocabulary of {v}")));
            }
            let i = id as usize;
            rows.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
        }
        let mut shape = ids.shape().to_vec();
        shape.push(d);
        Ok(vec![Tensor::new(shape, rows)?])
    }
}

/// Output projection to the vocabulary. With `tied_embedding_path` set it
/// owns no weight and reads the embedding table through the shared state of
/// the invocation root instead.
pub struct LmHead;

fn tied(cfg: &ConfigNode) -> Option<&str> {
    cfg.text("tied_embedding_path").filter(|p| !p.is_empty())
}

impl Layer for LmHead {
    fn schema(&self) -> ComponentSchema {
        sharded(
            ComponentSchema::new("LmHead")
                .required("input_dim", ValueKind::Int)
                .required("vocab_size", ValueKind::Int)
                .field("tied_embedding_path", ValueKind::Text, ""),
        )
    }

    fn source(&self) -> &'static str {
        include_str!("lm.rs")
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        if tied(cfg).is_some() {
            return Ok(Vec::new());
        }
        let (d, v) = (dim(cfg, "input_dim")?, dim(cfg, "vocab_size")?);
        Ok(vec![ParamSpec {
            name: "weight".into(),
            shape: vec![d, v],
            partition: partition_field(cfg, 2)?,
            init: ParamInit::FanInUniform(d),
        }])
    }

    fn remat_tags(&self, cfg: &ConfigNode, work: &Workload) -> Result<Vec<RematTag>> {
        Ok(vec![RematTag {
            name: "logits".into(),
            bytes: tokens(work) * dim128(cfg, "vocab_size")? * bytes(cfg)?,
            recompute_flops: self.flops(cfg, work)?,
        }])
    }

    fn flops(&self, cfg: &ConfigNode, work: &Workload) -> Result<u128> {
        Ok(2 * tokens(work) * dim128(cfg, "input_dim")? * dim128(cfg, "vocab_size")?)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let x = single(inputs, "LmHead")?;
        check_last_dim(&x, dim(module.config(), "input_dim")?, "LmHead")?;
        let w = match tied(module.config()) {
            Some(path) => get_shared_state(path)?
                .param("weight")
                .ok_or_else(|| RuntimeError::BadPath(format!("{path}/weight")))?
                .transpose()?,
            None => param("weight")?,
        };
        Ok(vec![linear_forward(&x, &w, None)?])
    }
}

/// Transformer stack followed by a final norm.
pub struct Decoder;

impl Layer for Decoder {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("Decoder")
            .required("input_dim", ValueKind::Int)
            .field("norm_eps", ValueKind::Float, DEFAULT_EPS)
            .child("transformer", "StackedTransformer")
    }

    fn source(&self) -> &'static str {
        include_str!("lm.rs")
    }

    fn propagate(&self, cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        let d = dim(cfg, "input_dim")? as i64;
        propagate(cfg, &ConfigPath::root().field("transformer"), "input_dim", d)
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        Ok(vec![scale_param("output_norm_scale", dim(cfg, "input_dim")?)])
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let x = single(inputs, "Decoder")?;
        let h = single(invoke_child("transformer", vec![x])?, "transformer")?;
        let eps = module.config().float("norm_eps").unwrap_or(DEFAULT_EPS);
        Ok(vec![rmsnorm_forward(&h, &param("output_norm_scale")?, eps)?])
    }
}

/// Embedding, decoder and head: token ids in, logits out.
pub struct CausalLm;

impl Layer for CausalLm {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("CausalLm")
            .required("vocab_size", ValueKind::Int)
            .required("dim", ValueKind::Int)
            .child("embedding", "Embedding")
            .child("decoder", "Decoder")
            .child("lm_head", "LmHead")
    }

    fn source(&self) -> &'static str {
        include_str!("lm.rs")
    }

    fn propagate(&self, cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        let v = dim(cfg, "vocab_size")? as i64;
        let d = dim(cfg, "dim")? as i64;
        let root = ConfigPath::root();
        propagate(cfg, &root.field("embedding"), "vocab_size", v)?;
        propagate(cfg, &root.field("embedding"), "dim", d)?;
        propagate(cfg, &root.field("decoder"), "input_dim", d)?;
        propagate(cfg, &root.field("lm_head"), "input_dim", d)?;
        propagate(cfg, &root.field("lm_head"), "vocab_size", v)
    }

    fn forward(&self, _module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let ids = single(inputs, "CausalLm")?;
        let x = invoke_child("embedding", vec![ids])?;
        let h = invoke_child("decoder", x)?;
        invoke_child("lm_head", h)
    }
}
