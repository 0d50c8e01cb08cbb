use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use indexmap::IndexMap;

use super::{ComponentSchema, ConfigError, ConfigPath, ConfigValue, Result, Segment};

/// A node of a configuration tree: a component kind plus its fields in schema order.
///
/// Nodes are plain values. Cloning deep-copies the tree, so edits to a clone
/// never show up in the original.
#[derive(Clone)]
pub struct ConfigNode {
    schema: Arc<ComponentSchema>,
    fields: IndexMap<String, ConfigValue>,
}

impl PartialEq for ConfigNode {
    fn eq(&self, other: &Self) -> bool {
        self.kind() == other.kind() && self.fields == other.fields
    }
}

impl fmt::Debug for ConfigNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct(self.kind());
        for (k, v) in &self.fields {
            s.field(k, v);
        }
        s.finish()
    }
}

impl ConfigNode {
    pub(crate) fn from_parts(
        schema: Arc<ComponentSchema>,
        fields: IndexMap<String, ConfigValue>,
    ) -> Self {
        Self { schema, fields }
    }

    pub fn kind(&self) -> &str {
        &self.schema.kind
    }

    pub fn schema(&self) -> &Arc<ComponentSchema> {
        &self.schema
    }

    pub fn fields(&self) -> impl Iterator<Item = (&String, &ConfigValue)> {
        self.fields.iter()
    }

    pub fn get(&self, field: &str) -> Option<&ConfigValue> {
        self.fields.get(field)
    }

    pub fn int(&self, field: &str) -> Option<i64> {
        self.get(field)?.as_int()
    }

    pub fn float(&self, field: &str) -> Option<f64> {
        self.get(field)?.as_float()
    }

    pub fn bool(&self, field: &str) -> Option<bool> {
        self.get(field)?.as_bool()
    }

    pub fn text(&self, field: &str) -> Option<&str> {
        self.get(field)?.as_text()
    }

    pub fn child(&self, field: &str) -> Option<&ConfigNode> {
        self.get(field)?.as_node()
    }

    /// Value at a dotted path.
    pub fn lookup(&self, path: &str) -> Result<&ConfigValue> {
        let parsed = ConfigPath::parse(path)?;
        self.lookup_path(&parsed)
            .ok_or_else(|| ConfigError::BadPath(path.to_string()))
    }

    pub fn lookup_path(&self, path: &ConfigPath) -> Option<&ConfigValue> {
        let (first, rest) = path.segments().split_first()?;
        let Segment::Field(name) = first else {
            return None;
        };
        let mut value = self.fields.get(name)?;
        for seg in rest {
            value = match (seg, value) {
                (Segment::Field(f), ConfigValue::SubConfig(n)) => n.fields.get(f)?,
                (Segment::Index(i), ConfigValue::Sequence(items)) => items.get(*i)?,
                (Segment::Key(k), ConfigValue::Mapping(m)) => m.get(k)?,
                _ => return None,
            };
        }
        Some(value)
    }

    /// Node at a path (root for the empty path).
    pub fn node_at(&self, path: &ConfigPath) -> Option<&ConfigNode> {
        if path.is_root() {
            return Some(self);
        }
        self.lookup_path(path)?.as_node()
    }

    /// Returns a new tree with `value` stored at `path`. `self` is untouched.
    pub fn set(&self, path: &str, value: impl Into<ConfigValue>) -> Result<ConfigNode> {
        let mut out = self.clone();
        out.set_in_place(path, value)?;
        Ok(out)
    }

    /// Builder-style variant of [`ConfigNode::set`] for trees this code owns.
    pub fn set_in_place(&mut self, path: &str, value: impl Into<ConfigValue>) -> Result<()> {
        let parsed = ConfigPath::parse(path)?;
        self.set_path(&parsed, value.into())
    }

    pub fn set_path(&mut self, path: &ConfigPath, value: ConfigValue) -> Result<()> {
        let bad = || ConfigError::BadPath(path.to_string());
        let (last, parent) = path.segments().split_last().ok_or_else(bad)?;
        let Segment::Field(field) = last else {
            return Err(bad());
        };
        let node = self.node_at_mut(parent).ok_or_else(bad)?;
        let schema = node.schema.field_schema(field).ok_or_else(bad)?;
        if !schema.kind.accepts(&value) {
            return Err(ConfigError::TypeMismatch {
                path: path.to_string(),
                expected: schema.kind,
                found: value.describe(),
            });
        }
        node.fields.insert(field.clone(), value);
        Ok(())
    }

    /// Sets several fields of this node at once (`cfg.set(a=.., b=..)`).
    pub fn with_fields<I, K, V>(mut self, items: I) -> Result<ConfigNode>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<ConfigValue>,
    {
        for (k, v) in items {
            self.set_in_place(k.as_ref(), v)?;
        }
        Ok(self)
    }

    pub(crate) fn node_at_mut(&mut self, path: &[Segment]) -> Option<&mut ConfigNode> {
        let mut node = self;
        let mut i = 0;
        while i < path.len() {
            let Segment::Field(name) = &path[i] else {
                return None;
            };
            let value = node.fields.get_mut(name)?;
            i += 1;
            node = match value {
                ConfigValue::SubConfig(n) => n,
                ConfigValue::Sequence(items) => {
                    let Some(Segment::Index(idx)) = path.get(i) else {
                        return None;
                    };
                    i += 1;
                    items.get_mut(*idx)?.as_node_mut()?
                }
                _ => return None,
            };
        }
        Some(node)
    }

    pub(crate) fn field_mut(&mut self, field: &str) -> Option<&mut ConfigValue> {
        self.fields.get_mut(field)
    }

    /// Stores a value without consulting the schema. Used by resolution passes
    /// that replace a deferred value with its result.
    pub(crate) fn put_unchecked(&mut self, field: &str, value: ConfigValue) {
        if let Some(slot) = self.fields.get_mut(field) {
            *slot = value;
        }
    }

    /// Direct child nodes in schema order, with the path suffix that reaches each.
    pub fn children(&self) -> Vec<(Vec<Segment>, &ConfigNode)> {
        let mut out = Vec::new();
        for (name, value) in &self.fields {
            match value {
                ConfigValue::SubConfig(n) => out.push((vec![Segment::Field(name.clone())], n)),
                ConfigValue::Sequence(items) => {
                    for (i, item) in items.iter().enumerate() {
                        if let ConfigValue::SubConfig(n) = item {
                            out.push((
                                vec![Segment::Field(name.clone()), Segment::Index(i)],
                                n,
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Depth-first traversal over every node: `enter` pre-order, `exit`
    /// post-order, siblings in schema order. Returning `Break` from either
    /// callback stops the walk.
    pub fn visit<E, X>(&self, mut enter: E, mut exit: X) -> ControlFlow<()>
    where
        E: FnMut(&ConfigPath, &ConfigNode) -> ControlFlow<()>,
        X: FnMut(&ConfigPath, &ConfigNode) -> ControlFlow<()>,
    {
        self.visit_inner(&ConfigPath::root(), &mut enter, &mut exit)
    }

    fn visit_inner<E, X>(&self, path: &ConfigPath, enter: &mut E, exit: &mut X) -> ControlFlow<()>
    where
        E: FnMut(&ConfigPath, &ConfigNode) -> ControlFlow<()>,
        X: FnMut(&ConfigPath, &ConfigNode) -> ControlFlow<()>,
    {
        enter(path, self)?;
        for (suffix, child) in self.children() {
            let mut child_path = path.clone();
            for seg in suffix {
                child_path = child_path.child(seg);
            }
            child.visit_inner(&child_path, enter, exit)?;
        }
        exit(path, self)
    }

    /// Pre-order walk with no exit callback.
    pub fn for_each_node<F: FnMut(&ConfigPath, &ConfigNode)>(&self, mut f: F) {
        let _ = self.visit(
            |p, n| {
                f(p, n);
                ControlFlow::Continue(())
            },
            |_, _| ControlFlow::Continue(()),
        );
    }
}

impl ConfigValue {
    pub(crate) fn as_node_mut(&mut self) -> Option<&mut ConfigNode> {
        match self {
            ConfigValue::SubConfig(n) => Some(n),
            _ => None,
        }
    }
}
