use std::collections::BTreeSet;

use serde::Serialize;

use super::{Result, SimError};

/// Keep the newest `keep_last_n` checkpoints plus every step divisible by
/// `keep_every_k`. Zero disables a criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GcPolicy {
    keep_last_n: usize,
    keep_every_k: u64,
}

impl GcPolicy {
    pub fn new(keep_last_n: usize, keep_every_k: u64) -> Result<Self> {
        if keep_last_n == 0 && keep_every_k == 0 {
            return Err(SimError::InvalidPolicy);
        }
        Ok(Self {
            keep_last_n,
            keep_every_k,
        })
    }

    pub fn keep_last_n(&self) -> usize {
        self.keep_last_n
    }

    pub fn keep_every_k(&self) -> u64 {
        self.keep_every_k
    }
}

/// Checkpoints that survive garbage collection. `steps` is sorted ascending.
pub fn gc_retained(steps: &[u64], policy: &GcPolicy) -> BTreeSet<u64> {
    let tail = steps.len().saturating_sub(policy.keep_last_n);
    let mut keep: BTreeSet<u64> = steps[tail..].iter().copied().collect();
    if policy.keep_every_k > 0 {
        keep.extend(steps.iter().copied().filter(|s| s % policy.keep_every_k == 0));
    }
    keep
}
