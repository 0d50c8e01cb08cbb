use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;

use super::{ConfigError, ConfigNode, ConfigPath, ConfigValue, FunctionSpec, Result, ValueKind};

/// Reserved: golden files use `<path>.klass` to record a node's kind.
pub const KIND_FIELD: &str = "klass";

/// Default for a schema field. Sub-config defaults name a kind so that nested
/// defaults are built recursively by [`Registry::default_config`].
#[derive(Debug, Clone, PartialEq)]
pub enum FieldDefault {
    Value(ConfigValue),
    Component(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSchema {
    pub name: String,
    pub kind: ValueKind,
    pub default: FieldDefault,
}

impl FieldSchema {
    pub fn new(name: impl Into<String>, kind: ValueKind, default: impl Into<ConfigValue>) -> Self {
        Self {
            name: name.into(),
            kind,
            default: FieldDefault::Value(default.into()),
        }
    }

    pub fn required(name: impl Into<String>, kind: ValueKind) -> Self {
        Self {
            name: name.into(),
            kind,
            default: FieldDefault::Value(ConfigValue::Required),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSchema {
    pub kind: String,
    pub fields: Vec<FieldSchema>,
    /// Behavior the runtime binds this kind to.
    pub factory: String,
}

impl ComponentSchema {
    pub fn new(kind: impl Into<String>) -> Self {
        let kind = kind.into();
        Self {
            factory: kind.clone(),
            kind,
            fields: Vec::new(),
        }
    }

    pub fn with_factory(mut self, factory: impl Into<String>) -> Self {
        self.factory = factory.into();
        self
    }

    pub fn field(mut self, name: &str, kind: ValueKind, default: impl Into<ConfigValue>) -> Self {
        self.fields.push(FieldSchema::new(name, kind, default));
        self
    }

    pub fn required(mut self, name: &str, kind: ValueKind) -> Self {
        self.fields.push(FieldSchema::required(name, kind));
        self
    }

    pub fn child(mut self, name: &str, default_kind: &str) -> Self {
        self.fields.push(FieldSchema {
            name: name.to_string(),
            kind: ValueKind::Config,
            default: FieldDefault::Component(default_kind.to_string()),
        });
        self
    }

    pub fn field_schema(&self, name: &str) -> Option<&FieldSchema> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| ConfigError::InvalidSchema {
            kind: self.kind.clone(),
            reason,
        };
        if self.kind.is_empty() {
            return Err(invalid("empty kind".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.fields {
            if f.name.is_empty() || f.name.contains(['.', '[', ']', ':', ' ']) {
                return Err(invalid(format!("bad field name '{}'", f.name)));
            }
            if f.name == KIND_FIELD {
                return Err(invalid(format!("'{KIND_FIELD}' is reserved")));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(invalid(format!("duplicate field '{}'", f.name)));
            }
            match &f.default {
                FieldDefault::Value(v) if !f.kind.accepts(v) => {
                    return Err(invalid(format!(
                        "default for '{}' is {} but field is {:?}",
                        f.name,
                        v.describe(),
                        f.kind
                    )));
                }
                FieldDefault::Component(_) if f.kind != ValueKind::Config => {
                    return Err(invalid(format!(
                        "component default on non-config field '{}'",
                        f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Resolves a [`FunctionSpec`] against the node that owns the field.
pub type ValueFunction =
    Arc<dyn Fn(&FunctionSpec, &ConfigNode) -> std::result::Result<ConfigValue, String> + Send + Sync>;

/// Invocation adapter for an external (third-party) factory. Receives the
/// resolved field values in schema order.
pub type FactoryAdapter = Arc<
    dyn Fn(&IndexMap<String, ConfigValue>) -> std::result::Result<Box<dyn Any + Send + Sync>, String>
        + Send
        + Sync,
>;

/// Component schemas, deferred-value functions and external factories.
#[derive(Clone, Default)]
pub struct Registry {
    schemas: BTreeMap<String, Arc<ComponentSchema>>,
    functions: BTreeMap<String, ValueFunction>,
    factories: BTreeMap<String, FactoryAdapter>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kinds", &self.schemas.keys().collect::<Vec<_>>())
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .field("factories", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_component(&mut self, schema: ComponentSchema) -> Result<()> {
        schema.validate()?;
        if self.schemas.contains_key(&schema.kind) {
            return Err(ConfigError::DuplicateKind(schema.kind));
        }
        self.schemas.insert(schema.kind.clone(), Arc::new(schema));
        Ok(())
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.schemas.contains_key(kind)
    }

    pub fn schema(&self, kind: &str) -> Result<&Arc<ComponentSchema>> {
        self.schemas
            .get(kind)
            .ok_or_else(|| ConfigError::UnknownKind(kind.to_string()))
    }

    pub fn schemas(&self) -> impl Iterator<Item = &Arc<ComponentSchema>> {
        self.schemas.values()
    }

    /// A node with every field at its schema default; sub-configs are built
    /// recursively from their default kinds.
    pub fn default_config(&self, kind: &str) -> Result<ConfigNode> {
        self.default_config_guarded(kind, &mut Vec::new())
    }

    fn default_config_guarded(&self, kind: &str, stack: &mut Vec<String>) -> Result<ConfigNode> {
        let schema = self.schema(kind)?.clone();
        if stack.iter().any(|k| k == kind) {
            return Err(ConfigError::InvalidSchema {
                kind: kind.to_string(),
                reason: format!("recursive default through {}", stack.join(" -> ")),
            });
        }
        stack.push(kind.to_string());
        let mut fields = IndexMap::with_capacity(schema.fields.len());
        for f in &schema.fields {
            let value = match &f.default {
                FieldDefault::Value(v) => v.clone(),
                FieldDefault::Component(child) => {
                    ConfigValue::SubConfig(self.default_config_guarded(child, stack)?)
                }
            };
            fields.insert(f.name.clone(), value);
        }
        stack.pop();
        Ok(ConfigNode::from_parts(schema, fields))
    }

    pub fn register_function<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&FunctionSpec, &ConfigNode) -> std::result::Result<ConfigValue, String>
            + Send
            + Sync
            + 'static,
    {
        self.functions.insert(name.to_string(), Arc::new(f));
    }

    /// Evaluates a deferred value against the node that owns it. `path` is the
    /// field path used in error reports.
    pub fn resolve_function(
        &self,
        spec: &FunctionSpec,
        owner: &ConfigNode,
        path: &ConfigPath,
    ) -> Result<ConfigValue> {
        let f = self.functions.get(&spec.name).ok_or_else(|| ConfigError::Resolve {
            path: path.to_string(),
            reason: format!("unknown function '{}'", spec.name),
        })?;
        f(spec, owner).map_err(|reason| ConfigError::Resolve {
            path: path.to_string(),
            reason,
        })
    }

    pub fn register_factory<F>(&mut self, factory_id: &str, adapter: F) -> Result<()>
    where
        F: Fn(&IndexMap<String, ConfigValue>) -> std::result::Result<Box<dyn Any + Send + Sync>, String>
            + Send
            + Sync
            + 'static,
    {
        if self.factories.contains_key(factory_id) {
            return Err(ConfigError::DuplicateFactory(factory_id.to_string()));
        }
        self.factories
            .insert(factory_id.to_string(), Arc::new(adapter));
        Ok(())
    }

    /// Builds a config for an external factory from its declared parameters.
    /// The node's kind is `fn:<factory_id>`.
    pub fn config_from_factory(
        &self,
        factory_id: &str,
        params: Vec<FieldSchema>,
    ) -> Result<ConfigNode> {
        if !self.factories.contains_key(factory_id) {
            return Err(ConfigError::UnknownFactory(factory_id.to_string()));
        }
        let schema = ComponentSchema {
            kind: format!("{FACTORY_PREFIX}{factory_id}"),
            fields: params,
            factory: factory_id.to_string(),
        };
        schema.validate()?;
        if schema.fields.iter().any(|f| {
            matches!(f.kind, ValueKind::Config | ValueKind::ConfigList)
        }) {
            return Err(ConfigError::InvalidSchema {
                kind: schema.kind,
                reason: "factory parameters cannot be sub-configs".into(),
            });
        }
        let fields = schema
            .fields
            .iter()
            .map(|f| match &f.default {
                FieldDefault::Value(v) => (f.name.clone(), v.clone()),
                FieldDefault::Component(_) => unreachable!("rejected above"),
            })
            .collect();
        Ok(ConfigNode::from_parts(Arc::new(schema), fields))
    }

    /// Invokes the factory adapter with the node's resolved field values.
    pub fn instantiate_factory(
        &self,
        cfg: &ConfigNode,
        path: &ConfigPath,
    ) -> Result<Box<dyn Any + Send + Sync>> {
        let factory_id = cfg.schema().factory.as_str();
        let adapter = self
            .factories
            .get(factory_id)
            .ok_or_else(|| ConfigError::UnknownFactory(factory_id.to_string()))?;
        let mut values = IndexMap::new();
        for (name, value) in cfg.fields() {
            let field_path = path.field(name);
            let resolved = match value {
                ConfigValue::Required => {
                    return Err(ConfigError::Unset(field_path.to_string()))
                }
                ConfigValue::Function(spec) => self.resolve_function(spec, cfg, &field_path)?,
                other => other.clone(),
            };
            values.insert(name.clone(), resolved);
        }
        adapter(&values).map_err(|reason| ConfigError::Resolve {
            path: path.to_string(),
            reason,
        })
    }

    pub fn is_factory_kind(kind: &str) -> bool {
        kind.starts_with(FACTORY_PREFIX)
    }

    pub fn has_factory(&self, factory_id: &str) -> bool {
        self.factories.contains_key(factory_id)
    }
}

pub const FACTORY_PREFIX: &str = "fn:";
