#![allow(dead_code)]

use std::sync::Arc;

use composer::config::{ConfigNode, ConfigValue};
use composer::runtime::{init_state, instantiate, invoke, ModuleRegistry, ModuleTree, OutputCollection, RngKey, StateTree};
use composer::tensor::Tensor;

pub fn build(reg: &ModuleRegistry, kind: &str, fields: &[(&str, ConfigValue)]) -> ConfigNode {
    let mut cfg = reg.default_config(kind).unwrap();
    for (k, v) in fields {
        cfg.set_in_place(k, v.clone()).unwrap();
    }
    cfg
}

/// Instantiates `cfg`, overwrites the listed parameters and returns the pieces
/// needed for `invoke`.
pub fn with_params(
    reg: &ModuleRegistry,
    cfg: &ConfigNode,
    params: &[(&str, &str, Tensor)],
) -> (Arc<ModuleTree>, Arc<StateTree>) {
    let tree = instantiate(reg, cfg).unwrap();
    let mut state = init_state(&tree, &RngKey::zero()).unwrap();
    for (path, name, t) in params {
        state.set_param(path, name, t.clone()).unwrap();
    }
    (tree, Arc::new(state))
}

pub fn run(
    reg: &ModuleRegistry,
    cfg: &ConfigNode,
    params: &[(&str, &str, Tensor)],
    inputs: Vec<Tensor>,
) -> (Vec<Tensor>, OutputCollection) {
    let (tree, state) = with_params(reg, cfg, params);
    invoke(&tree, &state, RngKey::zero(), inputs).unwrap()
}

pub fn int(v: i64) -> ConfigValue {
    ConfigValue::from(v)
}

pub fn names(items: &[&str]) -> ConfigValue {
    ConfigValue::Sequence(items.iter().map(|s| ConfigValue::text(*s)).collect())
}

/// Deterministic pseudo-random tensor in [-1, 1).
pub fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut s = RngKey::from_seed(seed).stream();
    Tensor::from_fn(shape, |_| s.next_symmetric(1.0))
}

pub fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let d = a.max_abs_diff(b);
    assert!(d <= tol, "max abs diff {d} > {tol}");
}
