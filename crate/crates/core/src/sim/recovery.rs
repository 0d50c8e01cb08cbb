use serde::Serialize;

use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecoveryMode {
    /// Read the last checkpoint back from remote storage.
    RemoteRestore,
    /// Broadcast state from a healthy replica over the interconnect.
    PeerBroadcast,
}

impl RecoveryMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "remote" | "remote_restore" => Some(Self::RemoteRestore),
            "peer" | "peer_broadcast" => Some(Self::PeerBroadcast),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryScenario {
    pub state_bytes: f64,
    pub checkpoint_interval_steps: u64,
    pub step_seconds: f64,
    pub remote_bps: f64,
    pub interconnect_bps: f64,
    pub failure_step: u64,
    pub reschedule_seconds: f64,
    pub mode: RecoveryMode,
}

impl RecoveryScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.into()));
        if !(self.remote_bps > 0.0 && self.interconnect_bps > 0.0) {
            return bad("bandwidths must be positive");
        }
        if self.checkpoint_interval_steps == 0 {
            return bad("checkpoint interval must be positive");
        }
        if !(self.state_bytes >= 0.0 && self.step_seconds >= 0.0 && self.reschedule_seconds >= 0.0) {
            return bad("sizes and times must be nonnegative");
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: RecoveryMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub mode: RecoveryMode,
    pub last_checkpoint_step: u64,
    pub lost_work_seconds: f64,
    pub restore_seconds: f64,
    pub reschedule_seconds: f64,
    pub total_downtime: f64,
}

pub fn simulate_recovery(s: &RecoveryScenario) -> Result<RecoveryReport> {
    s.validate()?;
    let last = s.failure_step / s.checkpoint_interval_steps * s.checkpoint_interval_steps;
    let lost = (s.failure_step - last) as f64 * s.step_seconds;
    let bandwidth = match s.mode {
        RecoveryMode::RemoteRestore => s.remote_bps,
        RecoveryMode::PeerBroadcast => s.interconnect_bps,
    };
    let restore = s.state_bytes / bandwidth;
    Ok(RecoveryReport {
        mode: s.mode,
        last_checkpoint_step: last,
        lost_work_seconds: lost,
        restore_seconds: restore,
        reschedule_seconds: s.reschedule_seconds,
        total_downtime: lost + restore + s.reschedule_seconds,
    })
}
