use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::config::{ComponentSchema, ConfigError, ConfigNode, ConfigPath, ConfigValue, Registry};

use super::{Layer, Result, RuntimeError};

/// Factory id of components that only carry data (mesh rules, modifiers) and
/// are never instantiated as modules.
pub const DATA_COMPONENT: &str = "data";

/// Component schemas plus the behaviors bound to them.
#[derive(Clone, Default)]
pub struct ModuleRegistry {
    configs: Registry,
    layers: BTreeMap<String, Arc<dyn Layer>>,
}

impl fmt::Debug for ModuleRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModuleRegistry")
            .field("configs", &self.configs)
            .field("layers", &self.layers.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ModuleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_layer<L: Layer + 'static>(&mut self, layer: L) -> Result<(), ConfigError> {
        let schema = layer.schema();
        let factory = schema.factory.clone();
        self.configs.register_component(schema)?;
        self.layers.insert(factory, Arc::new(layer));
        Ok(())
    }

    pub fn register_data_component(&mut self, schema: ComponentSchema) -> Result<(), ConfigError> {
        self.configs
            .register_component(schema.with_factory(DATA_COMPONENT))
    }

    pub fn configs(&self) -> &Registry {
        &self.configs
    }

    pub fn configs_mut(&mut self) -> &mut Registry {
        &mut self.configs
    }

    pub fn layer(&self, factory: &str) -> Option<&Arc<dyn Layer>> {
        self.layers.get(factory)
    }

    pub fn layer_for(&self, cfg: &ConfigNode) -> Result<&Arc<dyn Layer>> {
        self.layer(&cfg.schema().factory)
            .ok_or_else(|| RuntimeError::UnknownBehavior(cfg.schema().factory.clone()))
    }

    /// Number of registered kinds that have a behavior.
    pub fn num_layer_kinds(&self) -> usize {
        self.configs
            .schemas()
            .filter(|s| self.layers.contains_key(&s.factory))
            .count()
    }

    pub fn default_config(&self, kind: &str) -> Result<ConfigNode, ConfigError> {
        self.configs.default_config(kind)
    }

    /// Content hash over every registered schema and behavior source.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for schema in self.configs.schemas() {
            h.update(format!("{schema:?}\n").as_bytes());
            if let Some(layer) = self.layers.get(&schema.factory) {
                h.update(layer.source().as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// An instantiated component: its finalized config, its behavior, and its
/// children in schema order.
pub struct ModuleTree {
    name: String,
    path: String,
    config: ConfigNode,
    behavior: Arc<dyn Layer>,
    children: IndexMap<String, Arc<ModuleTree>>,
}

impl fmt::Debug for ModuleTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModuleTree")
            .field("kind", &self.kind())
            .field("path", &self.path)
            .field("children", &self.children.values().collect::<Vec<_>>())
            .finish()
    }
}

impl ModuleTree {
    pub fn kind(&self) -> &str {
        self.config.kind()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dotted path from the tree root (`""` for the root).
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn config(&self) -> &ConfigNode {
        &self.config
    }

    pub fn behavior_id(&self) -> &str {
        &self.config.schema().factory
    }

    pub fn behavior(&self) -> &Arc<dyn Layer> {
        &self.behavior
    }

    pub fn children(&self) -> impl Iterator<Item = (&String, &Arc<ModuleTree>)> {
        self.children.iter()
    }

    pub fn child(&self, name: &str) -> Option<&Arc<ModuleTree>> {
        self.children.get(name)
    }

    /// Pre-order list of every module.
    pub fn walk(&self) -> Vec<&ModuleTree> {
        let mut out = vec![self];
        for c in self.children.values() {
            out.extend(c.walk());
        }
        out
    }

    pub fn find(&self, path: &str) -> Option<&ModuleTree> {
        if path.is_empty() {
            return Some(self);
        }
        let mut cur = self;
        for part in path.split('.') {
            cur = cur.children.get(part)?;
        }
        Some(cur)
    }
}

pub(crate) fn join_path(parent: &str, child: &str) -> String {
    if parent.is_empty() {
        child.to_string()
    } else {
        format!("{parent}.{child}")
    }
}

/// Turns a config tree into a module tree.
///
/// Each node first resolves its own deferred values (its parent has already
/// propagated into it), rejects anything still required, then propagates into
/// its children before they are built.
pub fn instantiate(registry: &ModuleRegistry, cfg: &ConfigNode) -> Result<Arc<ModuleTree>> {
    build(registry, cfg.clone(), String::new(), &ConfigPath::root())
}

fn build(
    registry: &ModuleRegistry,
    mut cfg: ConfigNode,
    name: String,
    path: &ConfigPath,
) -> Result<Arc<ModuleTree>> {
    let behavior = registry.layer_for(&cfg)?.clone();
    resolve_own_fields(registry.configs(), &mut cfg, path)?;
    behavior.propagate(&mut cfg, path)?;
    behavior.validate(&cfg, path)?;

    let mut children = IndexMap::new();
    let slots: Vec<(ConfigPath, ConfigNode)> = cfg
        .children()
        .into_iter()
        .map(|(suffix, child)| {
            let mut rel = ConfigPath::root();
            for seg in suffix {
                rel = rel.child(seg);
            }
            (rel, child.clone())
        })
        .collect();
    for (rel, child) in slots {
        let mut child_path = path.clone();
        for seg in rel.segments() {
            child_path = child_path.child(seg.clone());
        }
        if Registry::is_factory_kind(child.kind()) {
            registry
                .configs()
                .instantiate_factory(&child, &child_path)?;
            continue;
        }
        if child.schema().factory == DATA_COMPONENT {
            continue;
        }
        let child_name = rel.to_string();
        let module = build(registry, child, child_name.clone(), &child_path)?;
        if let Some(slot) = cfg.node_at_mut(rel.segments()) {
            *slot = module.config.clone();
        }
        children.insert(child_name, module);
    }

    Ok(Arc::new(ModuleTree {
        name,
        path: path.to_string(),
        config: cfg,
        behavior,
        children,
    }))
}

fn resolve_own_fields(registry: &Registry, cfg: &mut ConfigNode, path: &ConfigPath) -> Result<()> {
    let names: Vec<String> = cfg.fields().map(|(k, _)| k.clone()).collect();
    for name in &names {
        let field_path = path.field(name);
        if let Some(ConfigValue::Function(spec)) = cfg.get(name) {
            let spec = spec.clone();
            let value = registry.resolve_function(&spec, cfg, &field_path)?;
            cfg.set_path(&ConfigPath::root().field(name), value)
                .map_err(|e| ConfigError::Resolve {
                    path: field_path.to_string(),
                    reason: e.to_string(),
                })?;
        }
    }
    for (name, value) in cfg.fields() {
        if let Some(rel) = first_unset(value) {
            let mut p = path.field(name);
            for seg in rel.segments() {
                p = p.child(seg.clone());
            }
            return Err(ConfigError::Unset(p.to_string()).into());
        }
    }
    Ok(())
}

/// Relative path of the first `Required` inside a non-config value.
fn first_unset(value: &ConfigValue) -> Option<ConfigPath> {
    match value {
        ConfigValue::Required => Some(ConfigPath::root()),
        ConfigValue::Sequence(items) => items.iter().enumerate().find_map(|(i, v)| {
            if matches!(v, ConfigValue::SubConfig(_)) {
                return None;
            }
            first_unset(v).map(|p| prefixed(ConfigPath::root().index(i), p))
        }),
        ConfigValue::Mapping(m) => m
            .iter()
            .find_map(|(k, v)| first_unset(v).map(|p| prefixed(ConfigPath::root().key(k), p))),
        _ => None,
    }
}

fn prefixed(prefix: ConfigPath, rest: ConfigPath) -> ConfigPath {
    let mut p = prefix;
    for seg in rest.segments() {
        p = p.child(seg.clone());
    }
    p
}
