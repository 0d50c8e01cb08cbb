//! Functional module runtime: instantiation, state initialization and
//! invocation under a per-thread context stack.

pub mod context;
mod error;
mod layer;
mod rng;
mod state;
mod tree;

pub use context::{
    add_module_output, add_state_update, add_summary, context_paths, current_key, current_path,
    get_shared_state, invoke, invoke_child, param, OutputCollection, SummaryValue,
};
pub use error::{Result, RuntimeError};
pub use layer::{
    dim, dtype_bytes, layer_dtype_bytes, partition_field, Layer, LayerMetadata, ParamInit,
    ParamSpec, RematTag, Workload,
};
pub use rng::{child_key, KeyStream, RngKey};
pub use state::{init_state, module_key, StateTree};
pub use tree::{instantiate, ModuleRegistry, ModuleTree, DATA_COMPONENT};
