//! Config modifiers, remat policies and mesh rules.
//!
//! All of these live in configs as data components, so an experiment's mesh
//! rules are part of its golden file.

use std::collections::BTreeMap;

use globset::{Glob, GlobMatcher};

use crate::config::{ComponentSchema, ConfigNode, ConfigPath, ConfigValue, Registry, ValueKind};
use crate::runtime::{dtype_bytes, DATA_COMPONENT};

use super::MeshError;

pub const REMAT_FIELD: &str = "remat_policy";
pub const MATCH_ALL: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RematDecision {
    Save,
    Recompute,
    Offload,
}

impl RematDecision {
    pub fn parse(s: &str) -> Result<Self, MeshError> {
        match s {
            "save" => Ok(Self::Save),
            "recompute" => Ok(Self::Recompute),
            "offload" => Ok(Self::Offload),
            _ => Err(MeshError::BadDecision(s.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Save => "save",
            Self::Recompute => "recompute",
            Self::Offload => "offload",
        }
    }
}

/// Per-tag decisions. `"*"` covers tags not listed by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RematPolicy(pub BTreeMap<String, RematDecision>);

impl RematPolicy {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, RematDecision)>,
        S: Into<String>,
    {
        Self(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// Named policies usable in place of an explicit mapping.
    pub fn preset(name: &str) -> Option<Self> {
        use RematDecision::*;
        Some(match name {
            "save_all" => Self::new([(MATCH_ALL, Save)]),
            "recompute_all" => Self::new([(MATCH_ALL, Recompute)]),
            "offload_dots" => Self::new([(MATCH_ALL, Offload)]),
            "save_qkvoflash" => Self::new([
                (MATCH_ALL, Recompute),
                ("q_proj", Save),
                ("k_proj", Save),
                ("v_proj", Save),
                ("o_proj", Save),
                ("context", Save),
            ]),
            _ => return None,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decision(&self, tag: &str) -> Option<RematDecision> {
        self.0.get(tag).or_else(|| self.0.get(MATCH_ALL)).copied()
    }

    /// Tag names listed explicitly (everything but `"*"`).
    pub fn named_tags(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str).filter(|k| *k != MATCH_ALL)
    }

    pub fn to_config(&self) -> ConfigValue {
        ConfigValue::Mapping(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), ConfigValue::text(v.as_str())))
                .collect(),
        )
    }

    /// Accepts a preset name or a tag → decision mapping.
    pub fn from_config(value: &ConfigValue) -> Result<Self, MeshError> {
        if let Some(name) = value.as_text() {
            return Self::preset(name).ok_or_else(|| MeshError::UnknownPolicy(name.to_string()));
        }
        let map = value
            .as_mapping()
            .ok_or_else(|| MeshError::BadModifier(format!("remat policy {value:?}")))?;
        map.iter()
            .map(|(k, v)| {
                let d = v
                    .as_text()
                    .ok_or_else(|| MeshError::BadDecision(format!("{v:?}")))?;
                Ok((k.clone(), RematDecision::parse(d)?))
            })
            .collect::<Result<_, _>>()
            .map(Self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigModifier {
    /// Axis sizes by name; axes not listed get size 1.
    MeshShape(BTreeMap<String, i64>),
    /// Module-path glob → policy.
    RematSpec(BTreeMap<String, RematPolicy>),
    DtypePolicy {
        dtype: String,
        params: BTreeMap<String, ConfigValue>,
    },
}

pub const MESH_RULE: &str = "MeshRule";
pub const MESH_RULES: &str = "MeshRules";
pub const MESH_SHAPE_MODIFIER: &str = "MeshShapeModifier";
pub const REMAT_SPEC_MODIFIER: &str = "RematSpecModifier";
pub const DTYPE_MODIFIER: &str = "DtypeModifier";

/// Schemas of the data components that carry rules and modifiers.
pub fn modifier_schemas() -> Vec<ComponentSchema> {
    let empty_map = || ConfigValue::Mapping(BTreeMap::new());
    vec![
        ComponentSchema::new(MESH_RULE)
            .required("instance_type_pattern", ValueKind::Text)
            .field("modifiers", ValueKind::ConfigList, Vec::<ConfigValue>::new()),
        ComponentSchema::new(MESH_RULES).field("rules", ValueKind::ConfigList, Vec::<ConfigValue>::new()),
        ComponentSchema::new(MESH_SHAPE_MODIFIER).field("mesh_shape", ValueKind::Mapping, empty_map()),
        ComponentSchema::new(REMAT_SPEC_MODIFIER)
            .field("remat_policies", ValueKind::Mapping, empty_map()),
        ComponentSchema::new(DTYPE_MODIFIER)
            .field("dtype", ValueKind::Text, "bf16")
            .field("params", ValueKind::Mapping, empty_map()),
    ]
}

impl ConfigModifier {
    pub fn from_config(node: &ConfigNode) -> Result<Self, MeshError> {
        let bad = |what: &str| MeshError::BadModifier(format!("{}: {what}", node.kind()));
        let mapping = |field: &str| {
            node.get(field)
                .and_then(ConfigValue::as_mapping)
                .cloned()
                .ok_or_else(|| bad(&format!("'{field}' must be a mapping")))
        };
        match node.kind() {
            MESH_SHAPE_MODIFIER => mapping("mesh_shape")?
                .into_iter()
                .map(|(axis, v)| {
                    let size = v.as_int().ok_or_else(|| bad("axis sizes must be integers"))?;
                    Ok((axis, size))
                })
                .collect::<Result<_, _>>()
                .map(Self::MeshShape),
            REMAT_SPEC_MODIFIER => mapping("remat_policies")?
                .iter()
                .map(|(pattern, v)| Ok((pattern.clone(), RematPolicy::from_config(v)?)))
                .collect::<Result<_, _>>()
                .map(Self::RematSpec),
            DTYPE_MODIFIER => {
                let dtype = node.text("dtype").ok_or_else(|| bad("missing dtype"))?;
                if dtype_bytes(dtype).is_none() {
                    return Err(bad(&format!("unknown dtype '{dtype}'")));
                }
                Ok(Self::DtypePolicy {
                    dtype: dtype.to_string(),
                    params: mapping("params")?,
                })
            }
            other => Err(MeshError::BadModifier(format!("'{other}' is not a modifier"))),
        }
    }

    pub fn to_config(&self, registry: &Registry) -> Result<ConfigNode, MeshError> {
        let node = match self {
            Self::MeshShape(shape) => registry.default_config(MESH_SHAPE_MODIFIER)?.set(
                "mesh_shape",
                ConfigValue::Mapping(shape.iter().map(|(k, &v)| (k.clone(), v.into())).collect()),
            )?,
            Self::RematSpec(policies) => registry.default_config(REMAT_SPEC_MODIFIER)?.set(
                "remat_policies",
                ConfigValue::Mapping(
                    policies
                        .iter()
                        .map(|(k, p)| (k.clone(), p.to_config()))
                        .collect(),
                ),
            )?,
            Self::DtypePolicy { dtype, params } => registry
                .default_config(DTYPE_MODIFIER)?
                .set("dtype", dtype.as_str())?
                .set("params", ConfigValue::Mapping(params.clone()))?,
        };
        Ok(node)
    }
}

/// What to do when a remat pattern matches no module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoMatch {
    #[default]
    Error,
    Warn,
}

fn glob(pattern: &str) -> Result<GlobMatcher, MeshError> {
    if pattern.is_empty() {
        return Err(MeshError::BadPattern {
            pattern: pattern.into(),
            reason: "empty pattern".into(),
        });
    }
    Glob::new(pattern)
        .map(|g| g.compile_matcher())
        .map_err(|e| MeshError::BadPattern {
            pattern: pattern.into(),
            reason: e.to_string(),
        })
}

/// Rewrites a trainer config with one modifier.
pub fn apply_modifier(cfg: &ConfigNode, m: &ConfigModifier) -> Result<ConfigNode, MeshError> {
    apply_modifier_with(cfg, m, NoMatch::Error).map(|(c, _)| c)
}

/// As [`apply_modifier`], returning unmatched remat patterns as warnings
/// when `on_no_match` is [`NoMatch::Warn`].
pub fn apply_modifier_with(
    cfg: &ConfigNode,
    m: &ConfigModifier,
    on_no_match: NoMatch,
) -> Result<(ConfigNode, Vec<String>), MeshError> {
    let mut out = cfg.clone();
    let mut warnings = Vec::new();
    match m {
        ConfigModifier::MeshShape(sizes) => {
            let axes = axis_names(cfg)?;
            if let Some(unknown) = sizes.keys().find(|a| !axes.contains(a)) {
                return Err(MeshError::UnknownAxis(unknown.clone()));
            }
            let shape: Vec<i64> = axes.iter().map(|a| sizes.get(a).copied().unwrap_or(1)).collect();
            out.set_in_place("mesh_shape", shape)?;
        }
        ConfigModifier::RematSpec(policies) => {
            for (pattern, policy) in policies {
                let matcher = glob(pattern)?;
                let mut targets = Vec::new();
                cfg.for_each_node(|path, node| {
                    if node.schema().field_schema(REMAT_FIELD).is_some()
                        && matcher.is_match(path.without_indices())
                    {
                        targets.push(path.clone());
                    }
                });
                if targets.is_empty() {
                    match on_no_match {
                        NoMatch::Error => return Err(MeshError::NoMatch(pattern.clone())),
                        NoMatch::Warn => warnings.push(MeshError::NoMatch(pattern.clone()).to_string()),
                    }
                }
                for path in targets {
                    out.set_path(&path.field(REMAT_FIELD), policy.to_config())?;
                }
            }
        }
        ConfigModifier::DtypePolicy { dtype, params } => {
            let mut data_roots: Vec<ConfigPath> = Vec::new();
            let mut targets = Vec::new();
            cfg.for_each_node(|path, node| {
                if data_roots.iter().any(|r| path.starts_with(r)) {
                    return;
                }
                if node.schema().factory == DATA_COMPONENT {
                    data_roots.push(path.clone());
                } else if node.schema().field_schema("dtype").is_some() {
                    targets.push(path.field("dtype"));
                }
            });
            for path in targets {
                out.set_path(&path, dtype.as_str().into())?;
            }
            if out.schema().field_schema("dtype_policy_params").is_some() {
                out.set_in_place("dtype_policy_params", ConfigValue::Mapping(params.clone()))?;
            }
        }
    }
    Ok((out, warnings))
}

/// Applies modifiers left to right; later ones win.
pub fn apply_modifiers(cfg: &ConfigNode, mods: &[ConfigModifier]) -> Result<ConfigNode, MeshError> {
    mods.iter().try_fold(cfg.clone(), |c, m| apply_modifier(&c, m))
}

fn axis_names(cfg: &ConfigNode) -> Result<Vec<String>, MeshError> {
    cfg.get("mesh_axis_names")
        .and_then(ConfigValue::as_sequence)
        .and_then(|items| items.iter().map(|v| v.as_text().map(str::to_string)).collect())
        .ok_or_else(|| MeshError::BadModifier("config has no mesh_axis_names".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshRule {
    pub pattern: String,
    pub modifiers: Vec<ConfigModifier>,
}

impl MeshRule {
    pub fn new(pattern: impl Into<String>, modifiers: Vec<ConfigModifier>) -> Self {
        Self {
            pattern: pattern.into(),
            modifiers,
        }
    }

    pub fn from_config(node: &ConfigNode) -> Result<Self, MeshError> {
        let pattern = node
            .text("instance_type_pattern")
            .ok_or_else(|| MeshError::BadModifier("mesh rule without a pattern".into()))?;
        glob(pattern)?;
        let modifiers = config_list(node, "modifiers")
            .iter()
            .map(|m| ConfigModifier::from_config(m))
            .collect::<Result<_, _>>()?;
        Ok(Self::new(pattern, modifiers))
    }

    pub fn to_config(&self, registry: &Registry) -> Result<ConfigNode, MeshError> {
        let mods = self
            .modifiers
            .iter()
            .map(|m| m.to_config(registry).map(ConfigValue::SubConfig))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(registry
            .default_config(MESH_RULE)?
            .set("instance_type_pattern", self.pattern.as_str())?
            .set("modifiers", ConfigValue::Sequence(mods))?)
    }
}

fn config_list<'a>(node: &'a ConfigNode, field: &str) -> Vec<&'a ConfigNode> {
    node.get(field)
        .and_then(ConfigValue::as_sequence)
        .map(|items| items.iter().filter_map(ConfigValue::as_node).collect())
        .unwrap_or_default()
}

/// Rules embedded in a trainer config (`mesh_rules`) or a `MeshRules` file.
pub fn rules_from_config(node: &ConfigNode) -> Result<Vec<MeshRule>, MeshError> {
    let field = if node.kind() == MESH_RULES { "rules" } else { "mesh_rules" };
    config_list(node, field)
        .into_iter()
        .map(MeshRule::from_config)
        .collect()
}

/// Modifiers of the first rule whose pattern matches `instance_type`.
pub fn select_mesh_rule(rules: &[MeshRule], instance_type: &str) -> Vec<ConfigModifier> {
    rules
        .iter()
        .find(|r| glob(&r.pattern).is_ok_and(|g| g.is_match(instance_type)))
        .map(|r| r.modifiers.clone())
        .unwrap_or_default()
}

/// Policy in force at `path`: the nearest enclosing module with a non-empty
/// `remat_policy`, together with that module's path.
pub fn effective_policy(root: &ConfigNode, path: &ConfigPath) -> Result<Option<(ConfigPath, RematPolicy)>, MeshError> {
    let mut cur = Some(path.clone());
    while let Some(p) = cur {
        if let Some(node) = root.node_at(&p) {
            if let Some(v) = node.get(REMAT_FIELD) {
                let policy = RematPolicy::from_config(v)?;
                if !policy.is_empty() {
                    return Ok(Some((p, policy)));
                }
            }
        }
        cur = p.parent().map(|(parent, _)| parent);
    }
    Ok(None)
}
