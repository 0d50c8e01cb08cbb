use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ValueKind};
use crate::runtime::{dim, Layer, ModuleTree, Result, RuntimeError};
use crate::tensor::Tensor;

use super::ops::rope_apply;

pub const DEFAULT_THETA: f64 = 10000.0;

fn query_key(inputs: Vec<Tensor>, kind: &str) -> Result<(Tensor, Tensor)> {
    let n = inputs.len();
    let mut it = inputs.into_iter();
    match (it.next(), it.next(), n) {
        (Some(q), Some(k), 2) => Ok((q, k)),
        _ => Err(RuntimeError::Shape(format!("{kind} takes (q, k), got {n} inputs"))),
    }
}

/// Positional slot that leaves queries and keys untouched.
pub struct NoPos;

impl Layer for NoPos {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("NoPos")
    }

    fn source(&self) -> &'static str {
        include_str!("pos_emb.rs")
    }

    fn forward(&self, _module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let (q, k) = query_key(inputs, "NoPos")?;
        Ok(vec![q, k])
    }
}

/// Rotary embedding over `q, k: [..., T, dim]` at positions `0..T`.
pub struct RoPE;

impl Layer for RoPE {
    fn schema(&self) -> ComponentSchema {
        ComponentSchema::new("RoPE")
            .required("dim", ValueKind::Int)
            .field("theta", ValueKind::Float, DEFAULT_THETA)
    }

    fn source(&self) -> &'static str {
        include_str!("pos_emb.rs")
    }

    fn validate(&self, cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        let d = dim(cfg, "dim")?;
        if d % 2 != 0 {
            return Err(RuntimeError::OddDim(d));
        }
        Ok(())
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let (q, k) = query_key(inputs, "RoPE")?;
        let d = dim(module.config(), "dim")?;
        if q.last_dim() != d {
            return Err(RuntimeError::Shape(format!(
                "RoPE of dim {d} applied to {:?}",
                q.shape()
            )));
        }
        let t = if q.rank() >= 2 { q.shape()[q.rank() - 2] } else { 1 };
        let positions: Vec<f64> = (0..t).map(|p| p as f64).collect();
        let theta = module.config().float("theta").unwrap_or(DEFAULT_THETA);
        let (q, k) = rope_apply(&q, &k, &positions, theta)?;
        Ok(vec![q, k])
    }
}
