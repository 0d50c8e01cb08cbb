use std::path::Path;

use crate::config::{parse_golden, serialize_golden, ConfigNode, ConfigValue};
use crate::layers::{mesh_axis_names, mesh_shape};
use crate::mesh::{
    apply_modifiers, resolve_mesh, rules_from_config, select_mesh_rule, DeviceCatalog, MeshRule,
};
use crate::runtime::{instantiate, ModuleRegistry};

use super::Result;

/// Applies the mesh rule matching `instance_type` and resolves the mesh
/// against the catalog's device count. `rules` replaces the rules carried by
/// the config (and is recorded in it) when given.
pub fn compose(
    registry: &ModuleRegistry,
    cfg: &ConfigNode,
    instance_type: &str,
    rules: Option<&[MeshRule]>,
    catalog: &DeviceCatalog,
) -> Result<ConfigNode> {
    let device = catalog.get(instance_type)?;
    let mut cfg = cfg.clone();
    let rules = match rules {
        Some(r) => {
            let nodes = r
                .iter()
                .map(|rule| rule.to_config(registry.configs()).map(ConfigValue::from))
                .collect::<Result<Vec<_>, _>>()?;
            cfg.set_in_place("mesh_rules", ConfigValue::Sequence(nodes))?;
            r.to_vec()
        }
        None => rules_from_config(&cfg)?,
    };
    let modifiers = select_mesh_rule(&rules, instance_type);
    let mut cfg = apply_modifiers(&cfg, &modifiers)?;

    let shape = mesh_shape(&cfg).unwrap_or_default();
    let axes = mesh_axis_names(&cfg).unwrap_or_default();
    let mesh = resolve_mesh(&shape, &axes, device.devices)?;
    let resolved: Vec<i64> = mesh.shape().iter().map(|&s| s as i64).collect();
    cfg.set_in_place("mesh_shape", resolved)?;

    instantiate(registry, &cfg)?;
    Ok(cfg)
}

/// Reads a `MeshRules` golden file.
pub fn load_rules(registry: &ModuleRegistry, path: &Path) -> Result<Vec<MeshRule>> {
    let text = std::fs::read_to_string(path)?;
    let node = parse_golden(registry.configs(), &text)?;
    Ok(rules_from_config(&node)?)
}

/// Golden files (`*.golden`) in `dir`, sorted by file name. The experiment
/// name is the file stem.
pub fn load_registry_dir(registry: &ModuleRegistry, dir: &Path) -> Result<Vec<(String, ConfigNode)>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "golden"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = std::fs::read_to_string(p)?;
            Ok((name, parse_golden(registry.configs(), &text)?))
        })
        .collect()
}

/// Writes one golden file per experiment into `dir`.
pub fn write_registry_dir(experiments: &[(String, ConfigNode)], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, cfg) in experiments {
        std::fs::write(dir.join(format!("{name}.golden")), serialize_golden(cfg))?;
    }
    Ok(())
}
