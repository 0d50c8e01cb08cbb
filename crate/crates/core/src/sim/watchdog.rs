use serde::Serialize;

use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub duration: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    records: Vec<StepRecord>,
}

impl StepTrace {
    pub fn new(records: Vec<StepRecord>) -> Result<Self> {
        for pair in records.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(SimError::InvalidTrace(format!(
                    "step {} follows step {}",
                    pair[1].step, pair[0].step
                )));
            }
        }
        if let Some(r) = records
            .iter()
            .find(|r| !(r.duration.is_finite() && r.duration >= 0.0) || !(0.0..=1.0).contains(&r.utilization))
        {
            return Err(SimError::InvalidTrace(format!("bad record at step {}", r.step)));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WatchdogAction {
    Restart,
    Alert,
    DumpStacks,
}

impl WatchdogAction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "restart" => Some(Self::Restart),
            "alert" => Some(Self::Alert),
            "dump_stacks" => Some(Self::DumpStacks),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WatchdogConfig {
    pub slow_factor: f64,
    pub window: usize,
    pub low_util: f64,
    pub consecutive: usize,
    pub action: WatchdogAction,
}

impl Default for WatchdogConfig {
    fn default() -> Self {
        Self {
            slow_factor: 3.0,
            window: 5,
            low_util: 0.1,
            consecutive: 3,
            action: WatchdogAction::Alert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    SlowStep { duration: f64, median: f64 },
    LowUtilization { consecutive: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WatchdogEvent {
    pub step: u64,
    pub kind: EventKind,
    pub action: WatchdogAction,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Slow steps are those longer than `slow_factor` times the median of the
/// previous `window` steps. Low utilization fires on the `consecutive`-th
/// low step in a row, after which the count starts over.
pub fn watchdog_scan(trace: &StepTrace, cfg: &WatchdogConfig) -> Result<Vec<WatchdogEvent>> {
    if cfg.window == 0 || cfg.consecutive == 0 {
        return Err(SimError::InvalidScenario("window and consecutive must be positive".into()));
    }
    if cfg.window > trace.len() {
        return Err(SimError::ShortTrace {
            len: trace.len(),
            window: cfg.window,
        });
    }
    let r = trace.records();
    let mut events = Vec::new();
    let mut low = 0;
    for (i, rec) in r.iter().enumerate() {
        if i >= cfg.window {
            let mut prior: Vec<f64> = r[i - cfg.window..i].iter().map(|p| p.duration).collect();
            let m = median(&mut prior);
            if rec.duration > cfg.slow_factor * m {
                events.push(WatchdogEvent {
                    step: rec.step,
                    kind: EventKind::SlowStep {
                        duration: rec.duration,
                        median: m,
                    },
                    action: cfg.action,
                });
            }
        }
        if rec.utilization < cfg.low_util {
            low += 1;
            if low == cfg.consecutive {
                events.push(WatchdogEvent {
                    step: rec.step,
                    kind: EventKind::LowUtilization { consecutive: low },
                    action: cfg.action,
                });
                low = 0;
            }
        } else {
            low = 0;
        }
    }
    Ok(events)
}
