use std::collections::BTreeMap;
use std::sync::Arc;

use crate::tensor::Tensor;

use super::rng::{child_key, RngKey};
use super::{ModuleTree, ParamInit, Result, RuntimeError};

/// Parameters of a module tree, nested the same way as the modules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateTree {
    params: BTreeMap<String, Tensor>,
    children: BTreeMap<String, Arc<StateTree>>,
}

impl StateTree {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn child(&self, name: &str) -> Option<&Arc<StateTree>> {
        self.children.get(name)
    }

    pub fn children(&self) -> impl Iterator<Item = (&String, &Arc<StateTree>)> {
        self.children.iter()
    }

    /// Subtree at a dotted module path.
    pub fn at(self: &Arc<Self>, path: &str) -> Option<Arc<StateTree>> {
        if path.is_empty() {
            return Some(self.clone());
        }
        let mut cur = self.clone();
        for part in path.split('.') {
            cur = cur.children.get(part)?.clone();
        }
        Some(cur)
    }

    /// Replaces one parameter, copying only the spine of the tree.
    pub fn set_param(&mut self, module_path: &str, name: &str, value: Tensor) -> Result<()> {
        let bad = || RuntimeError::BadPath(format!("{module_path}/{name}"));
        let mut cur = self;
        if !module_path.is_empty() {
            for part in module_path.split('.') {
                cur = Arc::make_mut(cur.children.get_mut(part).ok_or_else(bad)?);
            }
        }
        let slot = cur.params.get_mut(name).ok_or_else(bad)?;
        if slot.shape() != value.shape() {
            return Err(RuntimeError::Shape(format!(
                "{module_path}/{name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::numel).sum::<usize>()
            + self.children.values().map(|c| c.num_elements()).sum::<usize>()
    }

    /// Checks that the state has exactly the tree's modules and each module's
    /// declared parameter shapes.
    pub fn check_matches(&self, tree: &ModuleTree) -> Result<()> {
        let declared = tree.behavior().params(tree.config())?;
        if declared.len() != self.params.len() {
            return Err(RuntimeError::BadPath(format!(
                "state at '{}' has params {:?}",
                tree.path(),
                self.params.keys().collect::<Vec<_>>()
            )));
        }
        for p in &declared {
            let t = self.params.get(&p.name).ok_or_else(|| {
                RuntimeError::BadPath(format!("{}/{}", tree.path(), p.name))
            })?;
            if t.shape() != p.shape.as_slice() {
                return Err(RuntimeError::Shape(format!(
                    "{}/{}: expected {:?}, got {:?}",
                    tree.path(),
                    p.name,
                    p.shape,
                    t.shape()
                )));
            }
        }
        if self.children.len() != tree.children().count() {
            return Err(RuntimeError::BadPath(format!(
                "state at '{}' has a different set of children",
                tree.path()
            )));
        }
        for (name, child) in tree.children() {
            let sub = self
                .children
                .get(name)
                .ok_or_else(|| RuntimeError::BadPath(child.path().to_string()))?;
            sub.check_matches(child)?;
        }
        Ok(())
    }
}

/// Key of the module at `path`, derived from the root key one child at a time.
pub fn module_key(root: &RngKey, path: &str) -> RngKey {
    if path.is_empty() {
        return *root;
    }
    path.split('.')
        .fold(*root, |key, part| child_key(&key, part, 0))
}

/// Initializes every declared parameter from its module's derived key.
pub fn init_state(tree: &ModuleTree, root: &RngKey) -> Result<StateTree> {
    init_module(tree, *root)
}

fn init_module(tree: &ModuleTree, key: RngKey) -> Result<StateTree> {
    let mut state = StateTree::default();
    for p in tree.behavior().params(tree.config())? {
        let param_key = child_key(&key, &format!("param/{}", p.name), 0);
        let tensor = match p.init {
            ParamInit::Zeros => Tensor::zeros(&p.shape),
            ParamInit::Ones => Tensor::ones(&p.shape),
            ParamInit::FanInUniform(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut stream = param_key.stream();
                Tensor::from_fn(&p.shape, |_| stream.next_symmetric(bound))
            }
        };
        state.params.insert(p.name, tensor);
    }
    for (name, child) in tree.children() {
        let sub = init_module(child, child_key(&key, name, 0))?;
        state.children.insert(name.clone(), Arc::new(sub));
    }
    Ok(state)
}
