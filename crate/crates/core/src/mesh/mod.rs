//! Config-driven parallelism and rematerialization planning.

mod aot;
mod catalog;
mod error;
mod modifiers;
mod sharding;

pub use aot::{aot_analyze, AotReport, TagReport, BATCH_AXES, FSDP_AXIS, TRAIN_FLOPS_FACTOR};
pub use catalog::{DeviceCatalog, DeviceEntry, CATALOG_ENV};
pub use error::MeshError;
pub use modifiers::{
    apply_modifier, apply_modifier_with, apply_modifiers, effective_policy, modifier_schemas,
    rules_from_config, select_mesh_rule, ConfigModifier, MeshRule, NoMatch, RematDecision,
    RematPolicy, DTYPE_MODIFIER, MATCH_ALL, MESH_RULE, MESH_RULES, MESH_SHAPE_MODIFIER,
    REMAT_FIELD, REMAT_SPEC_MODIFIER,
};
pub use sharding::{infer_bias_spec, resolve_mesh, shard_shape, Mesh, PartitionSpec, WILDCARD};
