use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use ordered_float::OrderedFloat;
use serde::Serialize;

use super::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shard {
    pub name: String,
    pub bytes: u64,
    /// Replicated shards may be written by any replica; the others only by
    /// `owner`.
    pub replicated: bool,
    pub owner: usize,
}

impl Shard {
    pub fn replicated(name: impl Into<String>, bytes: u64) -> Self {
        Self {
            name: name.into(),
            bytes,
            replicated: true,
            owner: 0,
        }
    }

    pub fn owned(name: impl Into<String>, bytes: u64, owner: usize) -> Self {
        Self {
            name: name.into(),
            bytes,
            replicated: false,
            owner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShardManifest {
    shards: Vec<Shard>,
    replicas: usize,
}

impl ShardManifest {
    pub fn new(shards: Vec<Shard>, replicas: usize) -> Result<Self> {
        let bad = |m: String| Err(SimError::InvalidManifest(m));
        if replicas == 0 {
            return bad("replica count must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for s in &shards {
            if s.bytes == 0 {
                return bad(format!("shard '{}' has zero bytes", s.name));
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate shard '{}'", s.name));
            }
            if !s.replicated && s.owner >= replicas {
                return bad(format!(
                    "shard '{}' owned by replica {} of {replicas}",
                    s.name, s.owner
                ));
            }
        }
        Ok(Self { shards, replicas })
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }
}

/// Shards each replica writes, indexed by replica.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointPlan {
    pub assignments: Vec<Vec<Shard>>,
}

impl CheckpointPlan {
    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }
}

/// Replicated shards go round-robin over replicas in manifest order; owned
/// shards stay with their owner.
pub fn plan_checkpoint(manifest: &ShardManifest) -> CheckpointPlan {
    let mut assignments = vec![Vec::new(); manifest.replicas];
    let mut next = 0;
    for shard in &manifest.shards {
        let replica = if shard.replicated {
            let r = next;
            next = (next + 1) % manifest.replicas;
            r
        } else {
            shard.owner
        };
        assignments[replica].push(shard.clone());
    }
    CheckpointPlan { assignments }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaveResult {
    /// Simulated seconds until the slowest replica finishes.
    pub duration: f64,
    /// Largest host-memory footprint on any one replica.
    pub peak_host_bytes: u64,
}

/// Discrete-event simulation of every replica writing its shards with at
/// most `bound` shards staged in host memory at once. A shard occupies host
/// memory for `bytes / copy_rate` seconds. Completions at an instant are
/// processed before new starts.
pub fn simulate_save(plan: &CheckpointPlan, bound: usize, copy_rate: f64) -> Result<SaveResult> {
    if bound == 0 {
        return Err(SimError::InvalidScenario("concurrency bound must be at least 1".into()));
    }
    if !(copy_rate.is_finite() && copy_rate > 0.0) {
        return Err(SimError::InvalidScenario(format!("copy rate {copy_rate} must be positive")));
    }
    let mut result = SaveResult {
        duration: 0.0,
        peak_host_bytes: 0,
    };
    for shards in &plan.assignments {
        let (duration, peak) = simulate_replica(shards, bound, copy_rate);
        result.duration = result.duration.max(duration);
        result.peak_host_bytes = result.peak_host_bytes.max(peak);
    }
    Ok(result)
}

fn simulate_replica(shards: &[Shard], bound: usize, copy_rate: f64) -> (f64, u64) {
    let mut in_flight: BinaryHeap<Reverse<(OrderedFloat<f64>, usize)>> = BinaryHeap::new();
    let mut queue = shards.iter().enumerate();
    let mut clock = 0.0;
    let mut host = 0u64;
    let mut peak = 0u64;
    loop {
        while in_flight.len() < bound {
            let Some((i, shard)) = queue.next() else { break };
            host += shard.bytes;
            in_flight.push(Reverse((OrderedFloat(clock + shard.bytes as f64 / copy_rate), i)));
        }
        peak = peak.max(host);
        let Some(Reverse((OrderedFloat(t), i))) = in_flight.pop() else {
            break;
        };
        clock = t;
        host -= shards[i].bytes;
        while let Some(Reverse((OrderedFloat(t2), j))) = in_flight.peek().copied() {
            if t2 > clock {
                break;
            }
            in_flight.pop();
            host -= shards[j].bytes;
        }
    }
    (clock, peak)
}
