//! Deterministic simulation of checkpointing, garbage collection, failure
//! detection and recovery. All time is simulated.

mod checkpoint;
mod error;
mod files;
mod gc;
mod recovery;
mod sdc;
mod watchdog;

pub use checkpoint::{plan_checkpoint, simulate_save, CheckpointPlan, SaveResult, Shard, ShardManifest};
pub use error::{Result, SimError};
pub use files::{parse_trace, Scenario};
pub use gc::{gc_retained, GcPolicy};
pub use recovery::{simulate_recovery, RecoveryMode, RecoveryReport, RecoveryScenario};
pub use sdc::{flip_bit, sdc_check, synthetic_all_reduce, SdcVerdict};
pub use watchdog::{
    watchdog_scan, EventKind, StepRecord, StepTrace, WatchdogAction, WatchdogConfig, WatchdogEvent,
};
