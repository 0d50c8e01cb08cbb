//! Canonical, human-reviewable text form of a config tree.
//!
//! One line per node (`<path>.klass: <kind>`) and one per leaf
//! (`<path>: <value>`), sorted by path, LF-terminated. Equal trees produce
//! identical bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexMap;

use super::{
    ComponentSchema, ConfigError, ConfigNode, ConfigPath, ConfigValue, FieldSchema, FunctionSpec,
    Registry, Result, Scalar, Segment, ValueKind, FACTORY_PREFIX, KIND_FIELD,
};

const REQUIRED: &str = "REQUIRED";

pub fn serialize_golden(cfg: &ConfigNode) -> String {
    let mut lines = Vec::new();
    emit_node(cfg, &ConfigPath::root(), &mut lines);
    lines.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (path, value) in lines {
        out.push_str(&path);
        out.push_str(": ");
        out.push_str(&value);
        out.push('\n');
    }
    out
}

fn kind_line_path(path: &ConfigPath) -> String {
    format!("{path}.{KIND_FIELD}")
}

fn emit_node(node: &ConfigNode, path: &ConfigPath, lines: &mut Vec<(String, String)>) {
    lines.push((kind_line_path(path), node.kind().to_string()));
    for (name, value) in node.fields() {
        emit_value(value, &path.field(name), lines);
    }
}

fn emit_value(value: &ConfigValue, path: &ConfigPath, lines: &mut Vec<(String, String)>) {
    match value {
        ConfigValue::SubConfig(n) => emit_node(n, path, lines),
        ConfigValue::Sequence(items) if items.is_empty() => {
            lines.push((path.to_string(), "[]".into()))
        }
        ConfigValue::Sequence(items) => {
            for (i, item) in items.iter().enumerate() {
                emit_value(item, &path.index(i), lines);
            }
        }
        ConfigValue::Mapping(m) if m.is_empty() => lines.push((path.to_string(), "{}".into())),
        ConfigValue::Mapping(m) => {
            for (k, v) in m {
                emit_value(v, &path.key(k), lines);
            }
        }
        ConfigValue::Scalar(s) => lines.push((path.to_string(), s.render())),
        ConfigValue::Required => lines.push((path.to_string(), REQUIRED.into())),
        ConfigValue::Function(f) => lines.push((path.to_string(), f.render())),
    }
}

/// One differing line between two golden texts. `None` means the path is
/// absent on that side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenDelta {
    pub path: String,
    pub old: Option<String>,
    pub new: Option<String>,
}

/// Splits golden text into `path -> rendered value`, validating the format.
pub fn parse_golden_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if text.is_empty() {
        return Ok(out);
    }
    let malformed = |line: usize, reason: &str| ConfigError::MalformedGolden {
        line,
        reason: reason.to_string(),
    };
    let Some(body) = text.strip_suffix('\n') else {
        return Err(malformed(text.lines().count(), "missing trailing newline"));
    };
    let mut prev: Option<&str> = None;
    for (i, line) in body.split('\n').enumerate() {
        let lineno = i + 1;
        let split = split_line(line).ok_or_else(|| malformed(lineno, "expected '<path>: <value>'"))?;
        let (path, value) = (&line[..split], &line[split + 2..]);
        if value.is_empty() {
            return Err(malformed(lineno, "empty value"));
        }
        if let Some(p) = prev {
            if p >= path {
                return Err(malformed(lineno, "paths not strictly sorted"));
            }
        }
        prev = Some(path);
        out.insert(path.to_string(), value.to_string());
    }
    Ok(out)
}

/// Byte offset of the `": "` separating path and value, skipping quoted keys.
fn split_line(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut in_string = false;
    let mut i = 0;
    while i + 1 < bytes.len() {
        match bytes[i] {
            b'\\' if in_string => i += 1,
            b'"' => in_string = !in_string,
            b':' if !in_string && bytes[i + 1] == b' ' => return Some(i),
            _ => {}
        }
        i += 1;
    }
    None
}

/// Line-keyed diff of two golden texts, sorted by path.
pub fn golden_diff(a: &str, b: &str) -> Result<Vec<GoldenDelta>> {
    let left = parse_golden_lines(a)?;
    let right = parse_golden_lines(b)?;
    let mut paths: Vec<&String> = left.keys().chain(right.keys()).collect();
    paths.sort();
    paths.dedup();
    Ok(paths
        .into_iter()
        .filter_map(|p| {
            let (old, new) = (left.get(p), right.get(p));
            (old != new).then(|| GoldenDelta {
                path: p.clone(),
                old: old.cloned(),
                new: new.cloned(),
            })
        })
        .collect())
}

/// Strips a trailing `.klass` from a golden path, returning the node path.
pub fn node_path_of_kind_line(path: &str) -> Option<&str> {
    path.strip_suffix(KIND_FIELD)?.strip_suffix('.')
}

/// Parses a golden text back into a tree. Kinds are looked up in `registry`;
/// `fn:` factory nodes get a schema inferred from their values.
pub fn parse_golden(registry: &Registry, text: &str) -> Result<ConfigNode> {
    let lines = parse_golden_lines(text)?;
    let mut root = Raw::default_node();
    for (lineno, (path, value)) in lines.iter().enumerate() {
        let malformed = |reason: String| ConfigError::MalformedGolden {
            line: lineno + 1,
            reason,
        };
        if let Some(node_path) = node_path_of_kind_line(path) {
            let parsed = ConfigPath::parse(node_path).map_err(|e| malformed(e.to_string()))?;
            let slot = root
                .slot(parsed.segments())
                .ok_or_else(|| malformed(format!("conflicting entries at '{path}'")))?;
            match slot {
                Raw::Node { kind, .. } if kind.is_none() => *kind = Some(value.clone()),
                _ => return Err(malformed(format!("conflicting entries at '{path}'"))),
            }
        } else {
            let parsed = ConfigPath::parse(path).map_err(|e| malformed(e.to_string()))?;
            let (last, parent) = parsed
                .segments()
                .split_last()
                .ok_or_else(|| malformed("empty path".into()))?;
            let slot = root
                .slot(parent)
                .ok_or_else(|| malformed(format!("conflicting entries at '{path}'")))?;
            let Raw::Node { entries, .. } = slot else {
                return Err(malformed(format!("conflicting entries at '{path}'")));
            };
            if entries
                .insert(last.clone(), Raw::Leaf(value.clone(), lineno + 1))
                .is_some()
            {
                return Err(malformed(format!("duplicate path '{path}'")));
            }
        }
    }
    build_node(registry, &root, &ConfigPath::root())
}

#[derive(Debug)]
enum Raw {
    Leaf(String, usize),
    Node {
        kind: Option<String>,
        entries: BTreeMap<Segment, Raw>,
    },
}

impl Raw {
    fn default_node() -> Self {
        Raw::Node {
            kind: None,
            entries: BTreeMap::new(),
        }
    }

    /// Walks to (creating as needed) the interior node at `path`.
    fn slot(&mut self, path: &[Segment]) -> Option<&mut Raw> {
        let mut cur = self;
        for seg in path {
            let Raw::Node { entries, .. } = cur else {
                return None;
            };
            cur = entries.entry(seg.clone()).or_insert_with(Raw::default_node);
        }
        match cur {
            Raw::Node { .. } => Some(cur),
            Raw::Leaf(..) => None,
        }
    }
}

fn structural(path: &ConfigPath, reason: impl Into<String>) -> ConfigError {
    ConfigError::MalformedGolden {
        line: 0,
        reason: format!("at '{path}': {}", reason.into()),
    }
}

fn build_node(registry: &Registry, raw: &Raw, path: &ConfigPath) -> Result<ConfigNode> {
    let Raw::Node { kind, entries } = raw else {
        return Err(structural(path, "expected a component"));
    };
    let kind = kind
        .as_deref()
        .ok_or_else(|| structural(path, "missing klass line"))?;
    let schema = if let Some(factory) = kind.strip_prefix(FACTORY_PREFIX) {
        infer_factory_schema(kind, factory, entries, path)?
    } else {
        registry.schema(kind)?.clone()
    };
    let mut fields = IndexMap::new();
    for f in &schema.fields {
        let raw_field = entries
            .get(&Segment::Field(f.name.clone()))
            .ok_or_else(|| structural(path, format!("missing field '{}'", f.name)))?;
        let field_path = path.field(&f.name);
        let value = match f.kind {
            ValueKind::Config => {
                ConfigValue::SubConfig(build_node(registry, raw_field, &field_path)?)
            }
            ValueKind::ConfigList => match raw_field {
                Raw::Leaf(text, _) if text == "[]" => ConfigValue::Sequence(Vec::new()),
                Raw::Node { kind: None, entries } => {
                    let items = indexed(entries, &field_path)?;
                    ConfigValue::Sequence(
                        items
                            .into_iter()
                            .enumerate()
                            .map(|(i, r)| {
                                build_node(registry, r, &field_path.index(i))
                                    .map(ConfigValue::SubConfig)
                            })
                            .collect::<Result<_>>()?,
                    )
                }
                _ => return Err(structural(&field_path, "expected a component list")),
            },
            _ => build_value(raw_field, &field_path)?,
        };
        if !f.kind.accepts(&value) {
            return Err(ConfigError::TypeMismatch {
                path: field_path.to_string(),
                expected: f.kind,
                found: value.describe(),
            });
        }
        fields.insert(f.name.clone(), value);
    }
    if let Some(extra) = entries
        .keys()
        .find(|k| !matches!(k, Segment::Field(n) if schema.field_schema(n).is_some()))
    {
        return Err(structural(path, format!("unexpected entry {extra:?}")));
    }
    Ok(ConfigNode::from_parts(schema, fields))
}

fn indexed<'a>(entries: &'a BTreeMap<Segment, Raw>, path: &ConfigPath) -> Result<Vec<&'a Raw>> {
    let mut out = Vec::with_capacity(entries.len());
    for (i, (seg, raw)) in entries.iter().enumerate() {
        match seg {
            Segment::Index(idx) if *idx == i => out.push(raw),
            _ => return Err(structural(path, "sequence indices must be 0..n")),
        }
    }
    Ok(out)
}

fn build_value(raw: &Raw, path: &ConfigPath) -> Result<ConfigValue> {
    match raw {
        Raw::Leaf(text, line) => parse_leaf(text).ok_or_else(|| ConfigError::MalformedGolden {
            line: *line,
            reason: format!("unparseable value '{text}'"),
        }),
        Raw::Node { kind: Some(_), .. } => Err(structural(path, "component in a value field")),
        Raw::Node { kind: None, entries } => {
            if entries.keys().all(|k| matches!(k, Segment::Index(_))) {
                indexed(entries, path)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| build_value(r, &path.index(i)))
                    .collect::<Result<Vec<_>>>()
                    .map(ConfigValue::Sequence)
            } else if entries.keys().all(|k| matches!(k, Segment::Key(_))) {
                let mut m = BTreeMap::new();
                for (seg, r) in entries {
                    let Segment::Key(k) = seg else { unreachable!() };
                    m.insert(k.clone(), build_value(r, &path.key(k))?);
                }
                Ok(ConfigValue::Mapping(m))
            } else {
                Err(structural(path, "mixed sequence/mapping entries"))
            }
        }
    }
}

fn parse_leaf(text: &str) -> Option<ConfigValue> {
    Some(match text {
        REQUIRED => ConfigValue::Required,
        "[]" => ConfigValue::Sequence(Vec::new()),
        "{}" => ConfigValue::Mapping(BTreeMap::new()),
        _ if text.starts_with(FACTORY_PREFIX) => ConfigValue::Function(parse_function(text)?),
        _ => ConfigValue::Scalar(parse_scalar(text)?),
    })
}

fn parse_scalar(text: &str) -> Option<Scalar> {
    match text {
        "true" => return Some(Scalar::Bool(true)),
        "false" => return Some(Scalar::Bool(false)),
        _ => {}
    }
    if text.starts_with('"') {
        return serde_json::from_str::<String>(text).ok().map(Scalar::Text);
    }
    let digits = text.strip_prefix('-').unwrap_or(text);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return text.parse().ok().map(Scalar::Int);
    }
    text.parse::<f64>().ok().map(Scalar::Float)
}

fn parse_function(text: &str) -> Option<FunctionSpec> {
    let body = text.strip_prefix(FACTORY_PREFIX)?;
    let open = body.find('(')?;
    let name = &body[..open];
    let args_text = body[open + 1..].strip_suffix(')')?;
    if name.is_empty() {
        return None;
    }
    let mut spec = FunctionSpec::new(name);
    for part in split_args(args_text) {
        let (k, v) = part.split_once('=')?;
        spec.args.insert(k.to_string(), parse_scalar(v)?);
    }
    Some(spec)
}

/// Splits `a=1,b="x,y"` on commas outside string literals.
fn split_args(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut parts = Vec::new();
    let (mut start, mut in_string, mut escaped) = (0, false, false);
    for (i, c) in text.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_string => escaped = true,
            '"' => in_string = !in_string,
            ',' if !in_string => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn infer_factory_schema(
    kind: &str,
    factory: &str,
    entries: &BTreeMap<Segment, Raw>,
    path: &ConfigPath,
) -> Result<Arc<ComponentSchema>> {
    let mut fields = Vec::new();
    for (seg, raw) in entries {
        let Segment::Field(name) = seg else {
            return Err(structural(path, "unexpected entry in factory config"));
        };
        let value = build_value(raw, &path.field(name))?;
        let vk = match &value {
            ConfigValue::Scalar(Scalar::Bool(_)) => ValueKind::Bool,
            ConfigValue::Scalar(Scalar::Int(_)) => ValueKind::Int,
            ConfigValue::Scalar(Scalar::Float(_)) => ValueKind::Float,
            ConfigValue::Scalar(Scalar::Text(_)) => ValueKind::Text,
            ConfigValue::Sequence(_) => ValueKind::Sequence,
            ConfigValue::Mapping(_) => ValueKind::Mapping,
            _ => ValueKind::Any,
        };
        fields.push(FieldSchema::new(name.clone(), vk, value));
    }
    Ok(Arc::new(ComponentSchema {
        kind: kind.to_string(),
        fields,
        factory: factory.to_string(),
    }))
}
