use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::config::ConfigNode;
use crate::runtime::{
    child_key, init_state, instantiate, invoke, ModuleRegistry, ModuleTree, OutputCollection,
    RngKey, RuntimeError, StateTree,
};
use crate::tensor::Tensor;

use super::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub steps: u64,
    pub seed: u64,
    pub batch: usize,
    pub seq_len: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            steps: 1,
            seed: 0,
            batch: 2,
            seq_len: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: u64,
    pub loss: f64,
    /// Scalar summaries keyed `<module path>/<name>`.
    pub summaries: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: Vec<StepSummary>,
}

impl RunSummary {
    pub fn final_summaries(&self) -> Option<&BTreeMap<String, Vec<f64>>> {
        self.steps.last().map(|s| &s.summaries)
    }
}

/// Token ids and next-token targets drawn from `key`.
pub fn synthetic_batch(key: &RngKey, batch: usize, seq_len: usize, vocab: usize) -> (Tensor, Tensor) {
    let mut stream = key.stream();
    let tokens: Vec<f64> = (0..batch * (seq_len + 1))
        .map(|_| stream.next_below(vocab as u64) as f64)
        .collect();
    let row = |b: usize, range: std::ops::Range<usize>| {
        tokens[b * (seq_len + 1) + range.start..b * (seq_len + 1) + range.end].to_vec()
    };
    let ids: Vec<f64> = (0..batch).flat_map(|b| row(b, 0..seq_len)).collect();
    let targets: Vec<f64> = (0..batch).flat_map(|b| row(b, 1..seq_len + 1)).collect();
    (
        Tensor::new(vec![batch, seq_len], ids).expect("sized to shape"),
        Tensor::new(vec![batch, seq_len], targets).expect("sized to shape"),
    )
}

/// Vocabulary size of the model under a trainer tree.
pub fn vocab_size(tree: &ModuleTree) -> Result<usize> {
    tree.walk()
        .into_iter()
        .find_map(|m| m.config().int("vocab_size"))
        .filter(|&v| v > 0)
        .map(|v| v as usize)
        .ok_or_else(|| {
            RuntimeError::InvalidConfig {
                path: "model.vocab_size".into(),
                reason: "no vocabulary size in the tree".into(),
            }
            .into()
        })
}

/// A materialized experiment ready for forward steps.
pub struct Prepared {
    pub tree: Arc<ModuleTree>,
    pub state: Arc<StateTree>,
    pub root_key: RngKey,
    pub vocab: usize,
}

pub fn prepare(registry: &ModuleRegistry, cfg: &ConfigNode, seed: u64) -> Result<Prepared> {
    let tree = instantiate(registry, cfg)?;
    let root_key = RngKey::from_seed(seed);
    let state = Arc::new(init_state(&tree, &child_key(&root_key, "init", 0))?);
    let vocab = vocab_size(&tree)?;
    Ok(Prepared {
        tree,
        state,
        root_key,
        vocab,
    })
}

impl Prepared {
    /// One forward invocation of the trainer on the step's synthetic batch.
    pub fn step(&self, step: u64, batch: usize, seq_len: usize) -> Result<(f64, OutputCollection)> {
        let data_key = child_key(&self.root_key, "data", step);
        let (ids, targets) = synthetic_batch(&data_key, batch, seq_len, self.vocab);
        let key = child_key(&self.root_key, "forward", step);
        let (out, collection) = invoke(&self.tree, &self.state, key, vec![ids, targets])?;
        let loss = out.first().and_then(|t| t.data().first().copied()).unwrap_or(f64::NAN);
        Ok((loss, collection))
    }
}

/// Runs `steps` forward invocations. Everything is derived from `seed`.
pub fn run(registry: &ModuleRegistry, cfg: &ConfigNode, opts: RunOptions) -> Result<RunSummary> {
    if opts.batch == 0 || opts.seq_len == 0 {
        return Err(RuntimeError::Shape(format!(
            "batch {} and sequence length {} must be positive",
            opts.batch, opts.seq_len
        ))
        .into());
    }
    let prepared = prepare(registry, cfg, opts.seed)?;
    let mut steps = Vec::new();
    for step in 0..opts.steps {
        let (loss, collection) = prepared.step(step, opts.batch, opts.seq_len)?;
        steps.push(StepSummary {
            step,
            loss,
            summaries: collection.scalar_summaries(),
        });
    }
    Ok(RunSummary {
        seed: opts.seed,
        steps,
    })
}
