//! Hierarchical configuration trees.
//!
//! A config is a tree of [`ConfigNode`]s, one per component, each holding the
//! fields its registered [`ComponentSchema`] declares. Fields may be left
//! [`ConfigValue::Required`] or hold a deferred [`FunctionSpec`]; both are
//! settled when the tree is instantiated, usually after a parent has
//! propagated its own dimensions into the children.

mod error;
mod golden;
mod node;
mod path;
mod replace;
mod schema;
mod value;

pub use error::{ConfigError, Result};
pub use golden::{
    golden_diff, node_path_of_kind_line, parse_golden, parse_golden_lines, serialize_golden,
    GoldenDelta,
};
pub use node::ConfigNode;
pub use path::{ConfigPath, Segment};
pub use replace::{replace_config, ReplaceReport};
pub use schema::{
    ComponentSchema, FactoryAdapter, FieldDefault, FieldSchema, Registry, ValueFunction,
    FACTORY_PREFIX, KIND_FIELD,
};
pub use value::{ConfigValue, FunctionSpec, Scalar, ValueKind};
