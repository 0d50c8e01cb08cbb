use std::fmt;

use crate::config::ConfigValue;

use super::MeshError;

/// Wildcard entry in an unresolved mesh shape.
pub const WILDCARD: i64 = -1;

/// Logical device grid with named axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mesh {
    axes: Vec<String>,
    shape: Vec<usize>,
}

impl Mesh {
    pub fn new(axes: Vec<String>, shape: Vec<usize>) -> Result<Self, MeshError> {
        if axes.len() != shape.len() {
            return Err(MeshError::InvalidMesh(format!(
                "{} axis names for {} dimensions",
                axes.len(),
                shape.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.is_empty() {
                return Err(MeshError::InvalidMesh("empty axis name".into()));
            }
            if axes[..i].contains(a) {
                return Err(MeshError::InvalidMesh(format!("axis '{a}' appears twice")));
            }
        }
        if shape.contains(&0) {
            return Err(MeshError::InvalidMesh(format!("zero-sized axis in {shape:?}")));
        }
        Ok(Self { axes, shape })
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn devices(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn axis_size(&self, axis: &str) -> Option<usize> {
        self.axes
            .iter()
            .position(|a| a == axis)
            .map(|i| self.shape[i])
    }
}

impl fmt::Display for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .axes
            .iter()
            .zip(&self.shape)
            .map(|(a, s)| format!("{a}={s}"))
            .collect();
        write!(f, "mesh({})", parts.join(", "))
    }
}

/// Resolves at most one `-1` so that the mesh covers `total_devices` exactly.
pub fn resolve_mesh(
    shape: &[i64],
    axis_names: &[String],
    total_devices: usize,
) -> Result<Mesh, MeshError> {
    let wildcards = shape.iter().filter(|&&s| s == WILDCARD).count();
    if wildcards > 1 {
        return Err(MeshError::MultipleWildcards(shape.to_vec()));
    }
    if let Some(bad) = shape.iter().find(|&&s| s != WILDCARD && s <= 0) {
        return Err(MeshError::InvalidMesh(format!("axis size {bad} in {shape:?}")));
    }
    if total_devices == 0 {
        return Err(MeshError::InvalidMesh("zero devices".into()));
    }
    let fixed: usize = shape
        .iter()
        .filter(|&&s| s != WILDCARD)
        .map(|&s| s as usize)
        .product();
    let indivisible = || MeshError::Indivisible {
        what: "mesh".into(),
        detail: format!("{shape:?} over {total_devices} devices"),
    };
    let resolved: Vec<usize> = if wildcards == 1 {
        if !total_devices.is_multiple_of(fixed) {
            return Err(indivisible());
        }
        shape
            .iter()
            .map(|&s| if s == WILDCARD { total_devices / fixed } else { s as usize })
            .collect()
    } else {
        if fixed != total_devices {
            return Err(indivisible());
        }
        shape.iter().map(|&s| s as usize).collect()
    };
    Mesh::new(axis_names.to_vec(), resolved)
}

/// Per-dimension sharding: `None` is replicated, `Some(axis)` splits the
/// dimension over that mesh axis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionSpec(pub Vec<Option<String>>);

impl PartitionSpec {
    pub fn replicated(rank: usize) -> Self {
        Self(vec![None; rank])
    }

    pub fn axes<S: AsRef<str>>(entries: &[Option<S>]) -> Self {
        Self(
            entries
                .iter()
                .map(|e| e.as_ref().map(|s| s.as_ref().to_string()))
                .collect(),
        )
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[Option<String>] {
        &self.0
    }

    pub fn uses(&self, axis: &str) -> bool {
        self.0.iter().any(|e| e.as_deref() == Some(axis))
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().cloned().collect())
    }

    /// Prepends replicated dimensions.
    pub fn with_leading(&self, n: usize) -> Self {
        let mut v = vec![None; n];
        v.extend(self.0.iter().cloned());
        Self(v)
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<(), MeshError> {
        for (i, e) in self.0.iter().enumerate() {
            if let Some(axis) = e {
                if mesh.axis_size(axis).is_none() {
                    return Err(MeshError::UnknownAxis(axis.clone()));
                }
                if self.0[..i].iter().any(|p| p.as_deref() == Some(axis)) {
                    return Err(MeshError::DuplicateAxis(axis.clone()));
                }
            }
        }
        Ok(())
    }

    /// Config form: a sequence of axis names, `""` for replicated.
    pub fn to_config(&self) -> ConfigValue {
        ConfigValue::Sequence(
            self.0
                .iter()
                .map(|e| ConfigValue::text(e.clone().unwrap_or_default()))
                .collect(),
        )
    }

    pub fn from_config(value: &ConfigValue) -> Option<Self> {
        let items = value.as_sequence()?;
        items
            .iter()
            .map(|v| {
                v.as_text()
                    .map(|s| (!s.is_empty()).then(|| s.to_string()))
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .0
            .iter()
            .map(|e| e.as_deref().unwrap_or("None"))
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Per-device shape of a tensor sharded by `spec` over `mesh`.
pub fn shard_shape(
    global_shape: &[usize],
    spec: &PartitionSpec,
    mesh: &Mesh,
) -> Result<Vec<usize>, MeshError> {
    if spec.rank() != global_shape.len() {
        return Err(MeshError::RankMismatch {
            spec: spec.rank(),
            tensor: global_shape.len(),
        });
    }
    spec.validate(mesh)?;
    global_shape
        .iter()
        .zip(spec.entries())
        .map(|(&dim, entry)| {
            let parts = entry
                .as_deref()
                .and_then(|a| mesh.axis_size(a))
                .unwrap_or(1);
            if dim % parts != 0 {
                return Err(MeshError::Indivisible {
                    what: "tensor dimension".into(),
                    detail: format!(
                        "{dim} over axis '{}' of size {parts}",
                        entry.as_deref().unwrap_or_default()
                    ),
                });
            }
            Ok(dim / parts)
        })
        .collect()
}

/// Bias sharding follows the weight's output (last) dimension.
pub fn infer_bias_spec(weight_spec: &PartitionSpec) -> PartitionSpec {
    PartitionSpec(vec![weight_spec.0.last().cloned().flatten()])
}
