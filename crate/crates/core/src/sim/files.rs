//! Text formats: `key=value` scenario files and `step duration utilization`
//! trace files. `#` starts a comment in both.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::{
    RecoveryMode, RecoveryScenario, Result, Shard, ShardManifest, SimError, StepRecord, StepTrace,
    WatchdogAction, WatchdogConfig,
};

fn content(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    values: BTreeMap<String, (usize, String)>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = content(raw);
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| SimError::Parse { line: i + 1, reason };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if values.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(err(format!("duplicate key '{k}'")));
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let (line, v) = self
            .values
            .get(key)
            .ok_or_else(|| SimError::InvalidScenario(format!("missing key '{key}'")))?;
        v.parse().map_err(|_| SimError::Parse {
            line: *line,
            reason: format!("bad value '{v}' for '{key}'"),
        })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.values.contains_key(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }

    /// `kind=save|recovery|watchdog`, when present.
    pub fn kind(&self) -> Option<&str> {
        self.raw("kind")
    }

    /// Reads a recovery scenario. `mode` may be `remote`, `peer` or `both`;
    /// `both` yields the remote variant, callers switch with `with_mode`.
    pub fn recovery(&self) -> Result<RecoveryScenario> {
        let mode_text = self.raw("mode").unwrap_or("both");
        let mode = match mode_text {
            "both" => RecoveryMode::RemoteRestore,
            m => RecoveryMode::parse(m)
                .ok_or_else(|| SimError::InvalidScenario(format!("unknown mode '{m}'")))?,
        };
        let s = RecoveryScenario {
            state_bytes: self.get("state_bytes")?,
            checkpoint_interval_steps: self.get("checkpoint_interval_steps")?,
            step_seconds: self.get("step_seconds")?,
            remote_bps: self.get("remote_bps")?,
            interconnect_bps: self.get("interconnect_bps")?,
            failure_step: self.get("failure_step")?,
            reschedule_seconds: self.get_or("reschedule_seconds", 0.0)?,
            mode,
        };
        s.validate()?;
        Ok(s)
    }

    /// Modes to evaluate for a recovery scenario.
    pub fn recovery_modes(&self) -> Result<Vec<RecoveryMode>> {
        match self.raw("mode").unwrap_or("both") {
            "both" => Ok(vec![RecoveryMode::RemoteRestore, RecoveryMode::PeerBroadcast]),
            m => RecoveryMode::parse(m)
                .map(|m| vec![m])
                .ok_or_else(|| SimError::InvalidScenario(format!("unknown mode '{m}'"))),
        }
    }

    /// A save scenario: `replicas`, `shards` replicated shards of
    /// `shard_bytes` each plus `owned_shards` per replica, written with
    /// `concurrency_bound` at `copy_rate_bps`.
    pub fn save(&self) -> Result<(ShardManifest, usize, f64)> {
        let replicas: usize = self.get("replicas")?;
        let shards: usize = self.get("shards")?;
        let bytes: u64 = self.get::<f64>("shard_bytes")? as u64;
        let owned: usize = self.get_or("owned_shards", 0)?;
        let mut list: Vec<Shard> = (0..shards)
            .map(|i| Shard::replicated(format!("shard{i}"), bytes))
            .collect();
        for r in 0..replicas {
            list.extend((0..owned).map(|j| Shard::owned(format!("replica{r}_own{j}"), bytes, r)));
        }
        let manifest = ShardManifest::new(list, replicas)?;
        Ok((manifest, self.get("concurrency_bound")?, self.get("copy_rate_bps")?))
    }

    pub fn watchdog(&self) -> Result<WatchdogConfig> {
        let d = WatchdogConfig::default();
        let action = match self.raw("action") {
            None => d.action,
            Some(a) => WatchdogAction::parse(a)
                .ok_or_else(|| SimError::InvalidScenario(format!("unknown action '{a}'")))?,
        };
        Ok(WatchdogConfig {
            slow_factor: self.get_or("slow_factor", d.slow_factor)?,
            window: self.get_or("window", d.window)?,
            low_util: self.get_or("low_util", d.low_util)?,
            consecutive: self.get_or("consecutive", d.consecutive)?,
            action,
        })
    }
}

pub fn parse_trace(text: &str) -> Result<StepTrace> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = content(raw);
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| SimError::Parse { line: i + 1, reason };
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [step, duration, util] = cols[..] else {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        };
        records.push(StepRecord {
            step: step.parse().map_err(|_| err(format!("bad step '{step}'")))?,
            duration: duration
                .parse()
                .map_err(|_| err(format!("bad duration '{duration}'")))?,
            utilization: util
                .parse()
                .map_err(|_| err(format!("bad utilization '{util}'")))?,
        });
    }
    StepTrace::new(records)
}
