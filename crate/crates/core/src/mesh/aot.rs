//! Ahead-of-time memory, FLOPs and step-time estimates.
//!
//! Everything here works from configs and layer metadata. No parameter or
//! activation tensor is created.

use serde::Serialize;

use crate::config::{ConfigNode, ConfigPath, ConfigValue};
use crate::layers::DEFAULT_MESH_AXES;
use crate::runtime::{instantiate, layer_dtype_bytes, ModuleRegistry, Workload};

use super::catalog::DeviceCatalog;
use super::modifiers::{effective_policy, RematDecision};
use super::{resolve_mesh, shard_shape, Mesh, MeshError};

/// Mesh axes that split the batch.
pub const BATCH_AXES: [&str; 3] = ["data", "expert", "fsdp"];
/// Parameters sharded over this axis are all-gathered every step.
pub const FSDP_AXIS: &str = "fsdp";
/// Forward plus backward, in units of forward flops.
pub const TRAIN_FLOPS_FACTOR: u128 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagReport {
    pub module: String,
    pub tag: String,
    pub decision: &'static str,
    /// Per-device bytes at the per-replica workload.
    pub bytes: u128,
    /// Global flops repeated when recomputed.
    pub recompute_flops: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AotReport {
    pub instance_type: String,
    pub mesh_axes: Vec<String>,
    pub mesh_shape: Vec<usize>,
    pub batch: u64,
    pub seq_len: u64,
    pub per_replica_batch: u64,
    /// Per-device bytes.
    pub param_bytes: u128,
    pub optimizer_bytes: u128,
    pub saved_activation_bytes: u128,
    pub offloaded_host_bytes: u128,
    pub device_bytes: u128,
    pub hbm_bytes: f64,
    /// Global flops per step.
    pub forward_flops: u128,
    pub model_flops: u128,
    pub recompute_flops: u128,
    pub total_flops: u128,
    /// Per-device bytes exchanged per step.
    pub comm_bytes: u128,
    pub compute_seconds: f64,
    pub comm_seconds: f64,
    pub offload_seconds: f64,
    pub step_seconds: f64,
    pub mfu: f64,
    pub oom: bool,
    pub tags: Vec<TagReport>,
}

impl AotReport {
    /// `Err(E_OOM)` when the footprint does not fit.
    pub fn check(&self) -> Result<(), MeshError> {
        if self.oom {
            return Err(MeshError::Oom {
                needed: self.device_bytes,
                available: self.hbm_bytes as u128,
            });
        }
        Ok(())
    }
}

/// The trainer's mesh, or a pure fsdp mesh over every device for roots that
/// carry no mesh settings.
fn trainer_mesh(cfg: &ConfigNode, devices: usize) -> Result<Mesh, MeshError> {
    if cfg.get("mesh_shape").is_none() && cfg.get("mesh_axis_names").is_none() {
        let axes: Vec<String> = DEFAULT_MESH_AXES.iter().map(|s| s.to_string()).collect();
        return resolve_mesh(&[1, 1, -1, 1], &axes, devices);
    }
    let bad = |what: &str| MeshError::InvalidMesh(format!("trainer config has no valid {what}"));
    let shape: Vec<i64> = cfg
        .get("mesh_shape")
        .and_then(ConfigValue::as_sequence)
        .and_then(|s| s.iter().map(ConfigValue::as_int).collect())
        .ok_or_else(|| bad("mesh_shape"))?;
    let axes: Vec<String> = cfg
        .get("mesh_axis_names")
        .and_then(ConfigValue::as_sequence)
        .and_then(|s| s.iter().map(|v| v.as_text().map(str::to_string)).collect())
        .ok_or_else(|| bad("mesh_axis_names"))?;
    resolve_mesh(&shape, &axes, devices)
}

pub fn aot_analyze(
    registry: &ModuleRegistry,
    cfg: &ConfigNode,
    instance_type: &str,
    catalog: &DeviceCatalog,
    work: Workload,
) -> Result<AotReport, MeshError> {
    let device = catalog.get(instance_type)?;
    let mesh = trainer_mesh(cfg, device.devices)?;
    let tree = instantiate(registry, cfg)?;
    let finalized = tree.config();

    let replicas: u64 = BATCH_AXES
        .iter()
        .filter_map(|a| mesh.axis_size(a))
        .product::<usize>() as u64;
    if work.batch == 0 || work.seq_len == 0 || !work.batch.is_multiple_of(replicas) {
        return Err(MeshError::Indivisible {
            what: "batch".into(),
            detail: format!("{} over {replicas} data-parallel replicas", work.batch),
        });
    }
    let local = Workload::new(work.batch / replicas, work.seq_len);
    let fsdp = mesh.axis_size(FSDP_AXIS).unwrap_or(1);

    let mut param_bytes = 0u128;
    let mut comm_bytes = 0u128;
    let mut forward_flops = 0u128;
    let mut recompute_flops = 0u128;
    let mut saved = 0u128;
    let mut offloaded = 0u128;
    let mut tags = Vec::new();

    for module in tree.walk() {
        let mcfg = module.config();
        let layer = module.behavior();
        let elem = layer_dtype_bytes(mcfg)?;
        for p in layer.params(mcfg)? {
            let shard = shard_shape(&p.shape, &p.partition, &mesh)?;
            param_bytes += shard.iter().map(|&d| d as u128).product::<u128>() * elem;
            if fsdp > 1 && p.partition.uses(FSDP_AXIS) {
                comm_bytes += 2 * p.shape.iter().map(|&d| d as u128).product::<u128>() * elem;
            }
        }
        forward_flops += layer.flops(mcfg, &work)?;

        let local_tags = layer.remat_tags(mcfg, &local)?;
        let global_tags = layer.remat_tags(mcfg, &work)?;
        if local_tags.is_empty() {
            continue;
        }
        let path = ConfigPath::parse(module.path())?;
        let policy = effective_policy(finalized, &path)?;
        for (lt, gt) in local_tags.iter().zip(&global_tags) {
            let decision = policy
                .as_ref()
                .and_then(|(_, p)| p.decision(&lt.name))
                .unwrap_or(RematDecision::Save);
            match decision {
                RematDecision::Save => saved += lt.bytes,
                RematDecision::Recompute => recompute_flops += gt.recompute_flops,
                RematDecision::Offload => offloaded += lt.bytes,
            }
            tags.push(TagReport {
                module: module.path().to_string(),
                tag: lt.name.clone(),
                decision: decision.as_str(),
                bytes: lt.bytes,
                recompute_flops: gt.recompute_flops,
            });
        }
    }
    check_policy_tags(&tree, &tags)?;

    let multiplier = cfg.int("optimizer_state_multiplier").unwrap_or(2).max(0) as u128;
    let optimizer_bytes = multiplier * param_bytes;
    let offload_optimizer = cfg.bool("offload_optimizer_state").unwrap_or(false);
    let activation_offload = offloaded;
    if offload_optimizer {
        offloaded += optimizer_bytes;
    }
    let device_bytes =
        param_bytes + saved + if offload_optimizer { 0 } else { optimizer_bytes };

    let model_flops = TRAIN_FLOPS_FACTOR * forward_flops;
    let total_flops = model_flops + recompute_flops;
    let devices = mesh.devices() as f64;
    let compute_seconds = total_flops as f64 / devices / device.flops;
    let comm_seconds = comm_bytes as f64 / device.interconnect_bps;
    let offload_seconds = (activation_offload
        + if offload_optimizer { optimizer_bytes } else { 0 }) as f64
        / device.hostlink_bps;
    let step_seconds = compute_seconds.max(comm_seconds) + offload_seconds;
    let mfu = if step_seconds > 0.0 {
        model_flops as f64 / devices / (step_seconds * device.flops)
    } else {
        0.0
    };

    Ok(AotReport {
        instance_type: instance_type.to_string(),
        mesh_axes: mesh.axes().to_vec(),
        mesh_shape: mesh.shape().to_vec(),
        batch: work.batch,
        seq_len: work.seq_len,
        per_replica_batch: local.batch,
        param_bytes,
        optimizer_bytes,
        saved_activation_bytes: saved,
        offloaded_host_bytes: offloaded,
        device_bytes,
        hbm_bytes: device.hbm_bytes,
        forward_flops,
        model_flops,
        recompute_flops,
        total_flops,
        comm_bytes,
        compute_seconds,
        comm_seconds,
        offload_seconds,
        step_seconds,
        mfu,
        oom: device_bytes as f64 > device.hbm_bytes,
        tags,
    })
}

/// Every tag a policy names explicitly must exist under the module that
/// carries the policy.
fn check_policy_tags(
    tree: &crate::runtime::ModuleTree,
    tags: &[TagReport],
) -> Result<(), MeshError> {
    for module in tree.walk() {
        let path = ConfigPath::parse(module.path())?;
        let Some(value) = module.config().get(super::modifiers::REMAT_FIELD) else {
            continue;
        };
        let policy = super::RematPolicy::from_config(value)?;
        for name in policy.named_tags() {
            let prefix = module.path();
            let found = tags.iter().any(|t| {
                t.tag == name
                    && (prefix.is_empty()
                        || t.module == prefix
                        || t.module.starts_with(&format!("{prefix}.")))
            });
            if !found {
                return Err(MeshError::UnknownTag {
                    path: path.to_string(),
                    tag: name.to_string(),
                });
            }
        }
    }
    Ok(())
}
