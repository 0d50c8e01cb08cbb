use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ValueKind};
use crate::mesh::PartitionSpec;
use crate::runtime::{
    add_summary, dim, param, partition_field, Layer, ModuleTree, ParamInit, ParamSpec, RematTag,
    Result, RuntimeError, Workload,
};
use crate::tensor::Tensor;

use super::common::{activation_of, bytes, check_last_dim, sharded, single, tokens};
use super::feed_forward::{linear1_name, mlp_flops, mlp_tags};
use super::ops::{moe_forward, FeedForwardWeights};

/// Mixture of feed-forward experts with softmax top-k routing. Takes and
/// returns the same tensors as [`super::FeedForward`].
pub struct MoE;

fn experts_and_k(cfg: &ConfigNode) -> Result<(usize, usize)> {
    Ok((dim(cfg, "num_experts")?, dim(cfg, "top_k")?))
}

fn expert_spec(cfg: &ConfigNode, inner: &PartitionSpec) -> PartitionSpec {
    let axis = cfg.text("expert_axis").filter(|a| !a.is_empty());
    let mut entries = vec![axis.map(str::to_string)];
    entries.extend(inner.entries().iter().cloned());
    PartitionSpec(entries)
}

impl Layer for MoE {
    fn schema(&self) -> ComponentSchema {
        sharded(
            ComponentSchema::new("MoE")
                .required("input_dim", ValueKind::Int)
                .required("hidden_dim", ValueKind::Int)
                .field("activation", ValueKind::Any, "nn.relu")
                .field("num_experts", ValueKind::Int, 8i64)
                .field("top_k", ValueKind::Int, 2i64)
                .field("expert_axis", ValueKind::Text, "expert"),
        )
    }

    fn source(&self) -> &'static str {
        include_str!("moe.rs")
    }

    fn validate(&self, cfg: &ConfigNode, _path: &ConfigPath) -> Result<()> {
        activation_of(cfg)?;
        let (e, k) = experts_and_k(cfg)?;
        if k > e {
            return Err(RuntimeError::BadK { k, experts: e });
        }
        Ok(())
    }

    fn params(&self, cfg: &ConfigNode) -> Result<Vec<ParamSpec>> {
        let (d, h) = (dim(cfg, "input_dim")?, dim(cfg, "hidden_dim")?);
        let (e, _) = experts_and_k(cfg)?;
        let spec = partition_field(cfg, 2)?;
        let mut out = vec![ParamSpec {
            name: "router".into(),
            shape: vec![d, e],
            partition: PartitionSpec::replicated(2),
            init: ParamInit::FanInUniform(d),
        }];
        for i in 0..activation_of(cfg)?.branches() {
            out.push(ParamSpec {
                name: linear1_name(i),
                shape: vec![e, d, h],
                partition: expert_spec(cfg, &spec),
                init: ParamInit::FanInUniform(d),
            });
        }
        out.push(ParamSpec {
            name: "linear2".into(),
            shape: vec![e, h, d],
            partition: expert_spec(cfg, &spec.reversed()),
            init: ParamInit::FanInUniform(h),
        });
        Ok(out)
    }

    fn remat_tags(&self, cfg: &ConfigNode, work: &Workload) -> Result<Vec<RematTag>> {
        let n = tokens(work);
        let (e, k) = experts_and_k(cfg)?;
        let d = dim(cfg, "input_dim")? as u128;
        let mut tags = vec![RematTag {
            name: "router".into(),
            bytes: n * e as u128 * bytes(cfg)?,
            recompute_flops: 2 * n * d * e as u128,
        }];
        tags.extend(mlp_tags(cfg, n * k as u128, activation_of(cfg)?)?);
        Ok(tags)
    }

    fn flops(&self, cfg: &ConfigNode, work: &Workload) -> Result<u128> {
        let n = tokens(work);
        let (e, k) = experts_and_k(cfg)?;
        let d = dim(cfg, "input_dim")? as u128;
        Ok(2 * n * d * e as u128 + mlp_flops(cfg, n * k as u128, activation_of(cfg)?)?)
    }

    fn forward(&self, module: &ModuleTree, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        let cfg = module.config();
        let x = single(inputs, "MoE")?;
        check_last_dim(&x, dim(cfg, "input_dim")?, "MoE")?;
        let activation = activation_of(cfg)?;
        let (e, k) = experts_and_k(cfg)?;
        let linear1: Vec<Tensor> = (0..activation.branches())
            .map(|i| param(&linear1_name(i)))
            .collect::<Result<_>>()?;
        let linear2 = param("linear2")?;
        let experts = (0..e)
            .map(|j| {
                Ok(FeedForwardWeights {
                    linear1: linear1
                        .iter()
                        .map(|w| Ok((w.select(j)?, None)))
                        .collect::<Result<_>>()?,
                    linear2: (linear2.select(j)?, None),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (y, gate) = moe_forward(&x, &param("router")?, &experts, activation, k)?;
        add_summary("load_balance_loss", gate.load_balance_loss())?;
        Ok(vec![y])
    }
}
