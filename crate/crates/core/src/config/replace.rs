use super::{ConfigNode, ConfigPath, ConfigValue, Registry, Result};

/// What [`replace_config`] did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaceReport {
    pub replaced_paths: Vec<ConfigPath>,
    /// Fields of a replaced node with no same-kind counterpart in the template.
    pub dropped_fields: Vec<(ConfigPath, String)>,
    /// Fields carried from a replaced node into its replacement.
    pub copied_fields: Vec<(ConfigPath, String)>,
}

/// Replaces every descendant whose kind is in `targets` with a clone of
/// `template`, carrying over the fields both share (same name, same declared
/// kind). Kind matching is by exact name. The root itself is never replaced
/// and replacements are not searched again.
pub fn replace_config(
    registry: &Registry,
    cfg: &ConfigNode,
    targets: &[&str],
    template: &ConfigNode,
) -> Result<(ConfigNode, ReplaceReport)> {
    registry.schema(template.kind())?;
    for t in targets {
        registry.schema(t)?;
    }
    let mut report = ReplaceReport::default();
    let mut out = cfg.clone();
    rewrite(&mut out, &ConfigPath::root(), targets, template, &mut report);
    Ok((out, report))
}

fn rewrite(
    node: &mut ConfigNode,
    path: &ConfigPath,
    targets: &[&str],
    template: &ConfigNode,
    report: &mut ReplaceReport,
) {
    let names: Vec<String> = node.fields().map(|(k, _)| k.clone()).collect();
    for name in names {
        let field_path = path.field(&name);
        let Some(value) = node.field_mut(&name) else {
            continue;
        };
        match value {
            ConfigValue::SubConfig(child) => {
                visit_slot(child, &field_path, targets, template, report);
            }
            ConfigValue::Sequence(items) => {
                for (i, item) in items.iter_mut().enumerate() {
                    if let ConfigValue::SubConfig(child) = item {
                        visit_slot(child, &field_path.index(i), targets, template, report);
                    }
                }
            }
            _ => {}
        }
    }
}

fn visit_slot(
    child: &mut ConfigNode,
    path: &ConfigPath,
    targets: &[&str],
    template: &ConfigNode,
    report: &mut ReplaceReport,
) {
    if targets.contains(&child.kind()) {
        *child = rebuild(child, path, template, report);
        report.replaced_paths.push(path.clone());
    } else {
        rewrite(child, path, targets, template, report);
    }
}

fn rebuild(
    old: &ConfigNode,
    path: &ConfigPath,
    template: &ConfigNode,
    report: &mut ReplaceReport,
) -> ConfigNode {
    let mut fresh = template.clone();
    for (name, value) in old.fields() {
        let old_kind = old.schema().field_schema(name).map(|f| f.kind);
        let new_kind = template.schema().field_schema(name).map(|f| f.kind);
        match (old_kind, new_kind) {
            (Some(a), Some(b)) if a == b => {
                fresh.put_unchecked(name, value.clone());
                report.copied_fields.push((path.clone(), name.clone()));
            }
            _ => report.dropped_fields.push((path.clone(), name.clone())),
        }
    }
    fresh
}
