//! The invocation-context stack.
//!
//! Each thread has its own stack. [`invoke`] pushes a root frame; a module
//! calling [`invoke_child`] pushes a frame for the child with the child's
//! state slice, a key split from the parent's, and a fresh output collection.
//! Popping merges the child's collection into the parent's. Frames point at
//! modules; modules never point at frames.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::tensor::Tensor;

use super::rng::{child_key, RngKey};
use super::tree::join_path;
use super::{ModuleTree, Result, RuntimeError, StateTree};

#[derive(Debug, Clone, PartialEq)]
pub enum SummaryValue {
    Scalar(f64),
    Tensor(Tensor),
}

impl From<f64> for SummaryValue {
    fn from(v: f64) -> Self {
        SummaryValue::Scalar(v)
    }
}

impl From<Tensor> for SummaryValue {
    fn from(v: Tensor) -> Self {
        SummaryValue::Tensor(v)
    }
}

/// Side outputs of an invocation, keyed by module path relative to the
/// invoked root.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputCollection {
    pub summaries: BTreeMap<String, Vec<(String, SummaryValue)>>,
    pub module_outputs: BTreeMap<String, BTreeMap<String, Tensor>>,
    pub state_updates: BTreeMap<String, BTreeMap<String, Tensor>>,
}

impl OutputCollection {
    /// Flat summary keys: `<module path>/<key>`, or just `<key>` at the root.
    pub fn summary_keys(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (path, entries) in &self.summaries {
            for (key, _) in entries {
                let flat = flat_key(path, key);
                if !out.contains(&flat) {
                    out.push(flat);
                }
            }
        }
        out
    }

    /// Scalar summaries flattened to `<module path>/<key>`, in call order per key.
    pub fn scalar_summaries(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (path, entries) in &self.summaries {
            for (key, value) in entries {
                if let SummaryValue::Scalar(v) = value {
                    out.entry(flat_key(path, key)).or_default().push(*v);
                }
            }
        }
        out
    }

    fn absorb(&mut self, child: OutputCollection) {
        for (path, entries) in child.summaries {
            self.summaries.entry(path).or_default().extend(entries);
        }
        for (path, outputs) in child.module_outputs {
            self.module_outputs.entry(path).or_default().extend(outputs);
        }
        for (path, updates) in child.state_updates {
            self.state_updates.entry(path).or_default().extend(updates);
        }
    }
}

fn flat_key(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}/{key}")
    }
}

struct Frame {
    path: String,
    module: Arc<ModuleTree>,
    state: Arc<StateTree>,
    key: RngKey,
    calls: BTreeMap<String, u64>,
    collection: OutputCollection,
    is_root: bool,
}

thread_local! {
    static STACK: RefCell<Vec<Frame>> = const { RefCell::new(Vec::new()) };
}

/// Pops the frame it guards, even when the forward fails or panics.
struct FrameGuard {
    depth: usize,
}

impl FrameGuard {
    fn push(frame: Frame) -> Self {
        let depth = STACK.with(|s| {
            let mut s = s.borrow_mut();
            s.push(frame);
            s.len()
        });
        Self { depth }
    }

    fn pop(self) -> Frame {
        let frame = STACK.with(|s| {
            let mut s = s.borrow_mut();
            debug_assert_eq!(s.len(), self.depth, "context stack discipline violated");
            s.pop().expect("guarded frame present")
        });
        std::mem::forget(self);
        frame
    }
}

impl Drop for FrameGuard {
    fn drop(&mut self) {
        STACK.with(|s| {
            let mut s = s.borrow_mut();
            s.truncate(self.depth - 1);
        });
    }
}

fn with_top<T>(f: impl FnOnce(&mut Frame) -> Result<T>) -> Result<T> {
    STACK.with(|s| {
        let mut s = s.borrow_mut();
        let top = s.last_mut().ok_or(RuntimeError::NoContext)?;
        f(top)
    })
}

/// Runs `tree` as a pure function of `(state, key, inputs)`.
pub fn invoke(
    tree: &Arc<ModuleTree>,
    state: &Arc<StateTree>,
    key: RngKey,
    inputs: Vec<Tensor>,
) -> Result<(Vec<Tensor>, OutputCollection)> {
    state.check_matches(tree)?;
    let guard = FrameGuard::push(Frame {
        path: String::new(),
        module: tree.clone(),
        state: state.clone(),
        key,
        calls: BTreeMap::new(),
        collection: OutputCollection::default(),
        is_root: true,
    });
    let outputs = tree.behavior().forward(tree, inputs)?;
    let frame = guard.pop();
    Ok((outputs, frame.collection))
}

/// Invokes a child of the current module by name.
pub fn invoke_child(name: &str, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
    let frame = with_top(|top| {
        let module = top
            .module
            .child(name)
            .ok_or_else(|| RuntimeError::BadPath(join_path(&top.path, name)))?
            .clone();
        let state = top
            .state
            .child(name)
            .ok_or_else(|| RuntimeError::BadPath(join_path(&top.path, name)))?
            .clone();
        let count = top.calls.entry(name.to_string()).or_insert(0);
        let key = child_key(&top.key, name, *count);
        *count += 1;
        Ok(Frame {
            path: join_path(&top.path, name),
            module,
            state,
            key,
            calls: BTreeMap::new(),
            collection: OutputCollection::default(),
            is_root: false,
        })
    })?;
    let module = frame.module.clone();
    let guard = FrameGuard::push(frame);
    let outputs = module.behavior().forward(&module, inputs)?;
    let child = guard.pop();
    with_top(|top| {
        top.collection.absorb(child.collection);
        Ok(())
    })?;
    Ok(outputs)
}

/// A parameter of the current module.
pub fn param(name: &str) -> Result<Tensor> {
    with_top(|top| {
        top.state
            .param(name)
            .cloned()
            .ok_or_else(|| RuntimeError::BadPath(format!("{}/{name}", top.path)))
    })
}

pub fn add_summary(key: &str, value: impl Into<SummaryValue>) -> Result<()> {
    let value = value.into();
    with_top(|top| {
        top.collection
            .summaries
            .entry(top.path.clone())
            .or_default()
            .push((key.to_string(), value));
        Ok(())
    })
}

pub fn add_module_output(key: &str, value: Tensor) -> Result<()> {
    with_top(|top| {
        top.collection
            .module_outputs
            .entry(top.path.clone())
            .or_default()
            .insert(key.to_string(), value);
        Ok(())
    })
}

/// Records a new value for one of the current module's own parameters.
/// Paths reaching into other modules are rejected.
pub fn add_state_update(param_name: &str, value: Tensor) -> Result<()> {
    with_top(|top| {
        let existing = top
            .state
            .param(param_name)
            .ok_or_else(|| RuntimeError::BadPath(format!("{}/{param_name}", top.path)))?;
        if existing.shape() != value.shape() {
            return Err(RuntimeError::Shape(format!(
                "update of {}/{param_name}: {:?} vs {:?}",
                top.path,
                existing.shape(),
                value.shape()
            )));
        }
        top.collection
            .state_updates
            .entry(top.path.clone())
            .or_default()
            .insert(param_name.to_string(), value);
        Ok(())
    })
}

/// State slice of any module under the current root context, by dotted path.
pub fn get_shared_state(path: &str) -> Result<Arc<StateTree>> {
    STACK.with(|s| {
        let s = s.borrow();
        let root = s
            .iter()
            .rev()
            .find(|f| f.is_root)
            .ok_or(RuntimeError::NoContext)?;
        root.state
            .at(path)
            .ok_or_else(|| RuntimeError::BadPath(path.to_string()))
    })
}

pub fn current_path() -> Result<String> {
    with_top(|top| Ok(top.path.clone()))
}

pub fn current_key() -> Result<RngKey> {
    with_top(|top| Ok(top.key))
}

/// Paths of every frame on this thread's stack, outermost first.
pub fn context_paths() -> Vec<String> {
    STACK.with(|s| s.borrow().iter().map(|f| f.path.clone()).collect())
}
