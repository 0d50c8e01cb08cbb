use std::collections::BTreeMap;
use std::fmt;

use super::ConfigNode;

/// A leaf value. Also the only kind of value a [`FunctionSpec`] argument may hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Scalar {
    /// Canonical golden rendering. Floats use the shortest decimal that round-trips
    /// and always carry a `.`, an exponent, or a non-finite marker so they never
    /// read back as integers.
    pub fn render(&self) -> String {
        match self {
            Scalar::Bool(b) => b.to_string(),
            Scalar::Int(i) => i.to_string(),
            Scalar::Float(f) => format!("{f:?}"),
            Scalar::Text(s) => serde_json::to_string(s).expect("strings always serialize"),
        }
    }
}

/// A deferred value, computed from the owning node once its inputs are known.
///
/// `scaled_hidden_dim(scale=8/3)` is the canonical example: it resolves to
/// `round(input_dim * scale)` after the parent has propagated `input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    pub name: String,
    pub args: BTreeMap<String, Scalar>,
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: Scalar) -> Self {
        self.args.insert(key.into(), value);
        self
    }

    pub fn float_arg(&self, key: &str) -> Option<f64> {
        match self.args.get(key)? {
            Scalar::Float(f) => Some(*f),
            Scalar::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|(k, v)| format!("{k}={}", v.render()))
            .collect();
        format!("fn:{}({})", self.name, args.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Scalar(Scalar),
    Sequence(Vec<ConfigValue>),
    Mapping(BTreeMap<String, ConfigValue>),
    SubConfig(ConfigNode),
    /// Not yet specified. Serializes, but blocks instantiation.
    Required,
    Function(FunctionSpec),
}

impl ConfigValue {
    pub fn text(s: impl Into<String>) -> Self {
        ConfigValue::Scalar(Scalar::Text(s.into()))
    }

    pub fn is_required(&self) -> bool {
        matches!(self, ConfigValue::Required)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ConfigValue::Scalar(Scalar::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            ConfigValue::Scalar(Scalar::Float(f)) => Some(*f),
            ConfigValue::Scalar(Scalar::Int(i)) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ConfigValue::Scalar(Scalar::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ConfigValue::Scalar(Scalar::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn as_node(&self) -> Option<&ConfigNode> {
        match self {
            ConfigValue::SubConfig(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[ConfigValue]> {
        match self {
            ConfigValue::Sequence(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_mapping(&self) -> Option<&BTreeMap<String, ConfigValue>> {
        match self {
            ConfigValue::Mapping(m) => Some(m),
            _ => None,
        }
    }

    /// True if a `SubConfig` appears anywhere below this value (excluding itself).
    pub(crate) fn nests_config(&self) -> bool {
        match self {
            ConfigValue::Sequence(v) => v
                .iter()
                .any(|e| matches!(e, ConfigValue::SubConfig(_)) || e.nests_config()),
            ConfigValue::Mapping(m) => m
                .values()
                .any(|e| matches!(e, ConfigValue::SubConfig(_)) || e.nests_config()),
            _ => false,
        }
    }

    pub(crate) fn describe(&self) -> String {
        match self {
            ConfigValue::Scalar(Scalar::Bool(_)) => "bool".into(),
            ConfigValue::Scalar(Scalar::Int(_)) => "int".into(),
            ConfigValue::Scalar(Scalar::Float(_)) => "float".into(),
            ConfigValue::Scalar(Scalar::Text(_)) => "text".into(),
            ConfigValue::Sequence(_) => "sequence".into(),
            ConfigValue::Mapping(_) => "mapping".into(),
            ConfigValue::SubConfig(n) => format!("config<{}>", n.kind()),
            ConfigValue::Required => "required".into(),
            ConfigValue::Function(f) => format!("fn:{}", f.name),
        }
    }
}

impl From<bool> for ConfigValue {
    fn from(v: bool) -> Self {
        ConfigValue::Scalar(Scalar::Bool(v))
    }
}

impl From<i64> for ConfigValue {
    fn from(v: i64) -> Self {
        ConfigValue::Scalar(Scalar::Int(v))
    }
}

impl From<f64> for ConfigValue {
    fn from(v: f64) -> Self {
        ConfigValue::Scalar(Scalar::Float(v))
    }
}

impl From<&str> for ConfigValue {
    fn from(v: &str) -> Self {
        ConfigValue::text(v)
    }
}

impl From<String> for ConfigValue {
    fn from(v: String) -> Self {
        ConfigValue::text(v)
    }
}

impl From<ConfigNode> for ConfigValue {
    fn from(v: ConfigNode) -> Self {
        ConfigValue::SubConfig(v)
    }
}

impl From<FunctionSpec> for ConfigValue {
    fn from(v: FunctionSpec) -> Self {
        ConfigValue::Function(v)
    }
}

impl From<Scalar> for ConfigValue {
    fn from(v: Scalar) -> Self {
        ConfigValue::Scalar(v)
    }
}

impl<T: Into<ConfigValue>> From<Vec<T>> for ConfigValue {
    fn from(v: Vec<T>) -> Self {
        ConfigValue::Sequence(v.into_iter().map(Into::into).collect())
    }
}

/// Declared kind of a schema field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Bool,
    Int,
    Float,
    Text,
    /// Sequence of non-config values.
    Sequence,
    /// Text-keyed mapping of non-config values.
    Mapping,
    /// A single child component of any kind.
    Config,
    /// A sequence of child components.
    ConfigList,
    /// Any non-config value.
    Any,
}

impl ValueKind {
    pub fn accepts(self, value: &ConfigValue) -> bool {
        use ConfigValue as V;
        match (self, value) {
            (_, V::Required) => true,
            (ValueKind::Config | ValueKind::ConfigList, V::Function(_)) => false,
            (_, V::Function(_)) => true,
            (ValueKind::Bool, V::Scalar(Scalar::Bool(_))) => true,
            (ValueKind::Int, V::Scalar(Scalar::Int(_))) => true,
            (ValueKind::Float, V::Scalar(Scalar::Float(_))) => true,
            (ValueKind::Text, V::Scalar(Scalar::Text(_))) => true,
            (ValueKind::Sequence, V::Sequence(_)) => !value.nests_config(),
            (ValueKind::Mapping, V::Mapping(_)) => !value.nests_config(),
            (ValueKind::Config, V::SubConfig(_)) => true,
            (ValueKind::ConfigList, V::Sequence(items)) => items
                .iter()
                .all(|e| matches!(e, V::SubConfig(_))),
            (ValueKind::Any, V::SubConfig(_)) => false,
            (ValueKind::Any, _) => !value.nests_config(),
            _ => false,
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}
