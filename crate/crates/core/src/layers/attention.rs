use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ValueKind};
use crate::runtime::{
    dim, invoke_child, param, partition_field, Layer, ModuleTree, ParamInit, ParamSpec, RematTag,
    Result, RuntimeError, Workload,
};
use crate::tensor::Tensor;

use super::common::{bytes, check_last_dim, dim128, propagate, sharded, single, tokens};
use super::ops::{attention_context, attention_probs, merge_heads, split_heads};

pub const KERNELS: [&str; 2] = ["xla", "flash"];

const PROJECTIONS: [&str; 4] = ["q_proj", "k_proj", "v_proj", "o_proj"];

/// Multi-head scaled dot-product attention. Queries and keys pass through
/// the `pos_emb` child, which sees them split into heads.
///
/// `kernel` only changes AOT accounting: the `xla` kernel holds the full
/// probability matrix with the context, `flash` does not.
pub struct Attention;

fn heads(cfg: &ConfigNode) -> Result<(usize, usize)> {
    let d = dim(cfg, "input_dim")?;
    let h = dim(cfg, "num_heads")?;
    if d % h != 0 {
        return Err(RuntimeError::Shape(format!(
            "input_dim {d} is not divisible by num_heads {h}"
        )));
    }
    Ok((h, d / h))
}

impl Layer for Attention {
    fn schema(&self) -> ComponentSchema {
        sharded(
            ComponentSchema::new("Attention")
                .required("input_dim", ValueKind::Int)
                .required("num_heads", ValueKind::Int)
                .field("causal", ValueKind::Bool, true)
                .field("kernel", ValueKind::Text, "xla")
                .child("pos_emb", "NoPos"),
        )
    }

    fn source(&self) -> &'static str {
        include_str!("attention.rs")
    }

    fn propagate(&self, cfg: &mut ConfigNode, _path: &ConfigPath) -> Result<()> {
        if let Ok((_, head_dim)) = heads(cfg) {
            propagate(cfg, &ConfigPath::root().field("pos_emb"), "dim", head_dim as i64)?;
        }
        Ok(())
    }

    fn validate(&self, cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        heads(cfg)?;
        let kernel = cfg.text("kernel").unwrap_or("xla");
        if !KERNELS.contains(&kernel) {
            return Err(RuntimeError::InvalidConfig {
                path: "kernel".into(),
                reason: format!("unknown kernel '{kernel}'"),
            });
        }
        Ok(())
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let d = dim(cfg, "input_dim")?;
        let spec = partition_field(cfg, 2)?;
        Ok(PROJECTIONS
            .iter()
            .map(|&name| ParamSpec {
                name: name.into(),
                shape: vec![d, d],
                partition: if name == "o_proj" { spec.reversed() } else { spec.clone() },
                init: ParamInit::FanInUniform(d),
            })
            .collect())
    }

    fn remat_tags(&self, cfg: &ConfigNode, work: &Workload) -> Result<Vec<RematTag>> {
        let n = tokens(work);
        let d = dim128(cfg, "input_dim")?;
        let (h, _) = heads(cfg)?;
        let b = bytes(cfg)?;
        let proj = |name: &str| RematTag {
            name: name.into(),
            bytes: n * d * b,
            recompute_flops: 2 * n * d * d,
        };
        let t = work.seq_len as u128;
        let scores = if cfg.text("kernel") == Some("flash") {
            0
        } else {
            work.batch as u128 * h as u128 * t * t * b
        };
        Ok(vec![
            proj("q_proj"),
            proj("k_proj"),
            proj("v_proj"),
            RematTag {
                name: "context".into(),
                bytes: n * d * b + scores,
                recompute_flops: 4 * work.batch as u128 * t * t * d,
            },
            proj("o_proj"),
        ])
    }

    fn flops(&self, cfg: &ConfigNode, work: &Workload) -> Result<u128> {
        let d = dim128(cfg, "input_dim")?;
        let t = work.seq_len as u128;
        Ok(4 * 2 * tokens(work) * d * d + 4 * work.batch as u128 * t * t * d)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let cfg = module.config();
        let x = single(inputs, "Attention")?;
        let d = dim(cfg, "input_dim")?;
        check_last_dim(&x, d, "Attention")?;
        let shape = x.shape().to_vec();
        let (h, _) = heads(cfg)?;
        let t = if x.rank() >= 2 { shape[shape.len() - 2] } else { 1 };
        let b = x.numel() / (t * d);
        let x = x.reshape(vec![b, t, d])?;

        let q = split_heads(&x.matmul(&param("q_proj")?)?, h)?;
        let k = split_heads(&x.matmul(&param("k_proj")?)?, h)?;
        let v = split_heads(&x.matmul(&param("v_proj")?)?, h)?;
        let mut qk = invoke_child("pos_emb", vec![q, k])?.into_iter();
        let (Some(q), Some(k)) = (qk.next(), qk.next()) else {
            return Err(RuntimeError::Shape("pos_emb must return (q, k)".into()));
        };
        let probs = attention_probs(&q, &k, cfg.bool("causal").unwrap_or(true))?;
        let context = merge_heads(&attention_context(&probs, &v)?)?;
        let out = context.matmul(&param("o_proj")?)?;
        Ok(vec![out.reshape(shape)?])
    }
}
