use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::MeshError;

/// Environment variable naming a catalog file that replaces the builtin one.
pub const CATALOG_ENV: &str = "COMPOSER_CATALOG";

const BUILTIN: &str = include_str!("../../data/devices.txt");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceEntry {
    pub instance_type: String,
    pub devices: usize,
    pub hbm_bytes: f64,
    /// Peak flops per device per second.
    pub flops: f64,
    pub interconnect_bps: f64,
    pub hostlink_bps: f64,
}

/// Instance types and their per-device capacities, one entry per line:
/// `instance_type devices hbm_bytes flops interconnect_Bps hostlink_Bps`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceCatalog {
    entries: BTreeMap<String, DeviceEntry>,
}

impl DeviceCatalog {
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| MeshError::Catalog { line: i + 1, reason };
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [name, devices, hbm, flops, ici, host] = cols[..] else {
                return Err(err(format!("expected 6 columns, found {}", cols.len())));
            };
            let num = |field: &str, s: &str| -> Result<f64, MeshError> {
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                    _ => Err(err(format!("{field} must be a positive number, got '{s}'"))),
                }
            };
            let devices = match devices.parse::<usize>() {
                Ok(d) if d > 0 => d,
                _ => return Err(err(format!("devices must be a positive integer, got '{devices}'"))),
            };
            let entry = DeviceEntry {
                instance_type: name.to_string(),
                devices,
                hbm_bytes: num("hbm_bytes", hbm)?,
                flops: num("flops", flops)?,
                interconnect_bps: num("interconnect_Bps", ici)?,
                hostlink_bps: num("hostlink_Bps", host)?,
            };
            if entries.insert(name.to_string(), entry).is_some() {
                return Err(err(format!("duplicate instance type '{name}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin catalog parses")
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|e| MeshError::Catalog {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// The file named by `COMPOSER_CATALOG`, else the builtin catalog.
    pub fn from_env() -> Result<Self, MeshError> {
        match std::env::var_os(CATALOG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::builtin()),
        }
    }

    pub fn get(&self, instance_type: &str) -> Result<&DeviceEntry, MeshError> {
        self.entries
            .get(instance_type)
            .ok_or_else(|| MeshError::UnknownInstance(instance_type.to_string()))
    }

    pub fn insert(&mut self, entry: DeviceEntry) {
        self.entries.insert(entry.instance_type.clone(), entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &DeviceEntry> {
        self.entries.values()
    }
}
