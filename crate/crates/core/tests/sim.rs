use std::collections::BTreeSet;

use composer::sim::*;

fn replicated(n: usize, bytes: u64) -> Vec<Shard> {
    (0..n).map(|i| Shard::replicated(format!("s{i}"), bytes)).collect()
}

#[test]
fn plan_sizes() {
    let plan = plan_checkpoint(&ShardManifest::new(replicated(6, 1), 3).unwrap());
    assert_eq!(plan.sizes(), vec![2, 2, 2]);
    let names: BTreeSet<String> = plan.assignments.iter().flatten().map(|s| s.name.clone()).collect();
    assert_eq!(names.len(), 6);
    assert_eq!(plan_checkpoint(&ShardManifest::new(replicated(5, 1), 3).unwrap()).sizes(), vec![2, 2, 1]);
    assert_eq!(plan_checkpoint(&ShardManifest::new(replicated(4, 1), 1).unwrap()).sizes(), vec![4]);

    let mut shards = replicated(2, 1);
    shards.push(Shard::owned("own", 1, 1));
    let plan = plan_checkpoint(&ShardManifest::new(shards, 2).unwrap());
    assert!(plan.assignments[1].iter().any(|s| s.name == "own"));
    assert_eq!(plan.sizes(), vec![1, 2]);
}

#[test]
fn manifest_validation() {
    assert_eq!(ShardManifest::new(replicated(2, 1), 0).unwrap_err().code(), "E_INVALID_MANIFEST");
    assert_eq!(
        ShardManifest::new(vec![Shard::owned("x", 1, 5)], 2).unwrap_err().code(),
        "E_INVALID_MANIFEST"
    );
    let dup = vec![Shard::replicated("a", 1), Shard::replicated("a", 2)];
    assert_eq!(ShardManifest::new(dup, 1).unwrap_err().code(), "E_INVALID_MANIFEST");
}

/// Bounded-slot copy schedule worked out by hand for equal shards: with `b`
/// slots and `n` shards of `t` seconds each, shards run in waves.
fn equal_shards_oracle(n: usize, b: usize, t: f64, bytes: u64) -> (f64, u64) {
    let waves = n.div_ceil(b);
    (waves as f64 * t, b.min(n) as u64 * bytes)
}

#[test]
fn save_peak_and_duration() {
    let plan = plan_checkpoint(&ShardManifest::new(replicated(4, 10), 1).unwrap());
    let r = simulate_save(&plan, 2, 10.0).unwrap();
    assert_eq!(r.peak_host_bytes, 20);
    let (d, p) = equal_shards_oracle(4, 2, 1.0, 10);
    assert_eq!((r.duration, r.peak_host_bytes), (d, p));

    let sizes = [5u64, 30, 10, 20];
    let shards: Vec<Shard> = sizes.iter().enumerate().map(|(i, &b)| Shard::replicated(format!("s{i}"), b)).collect();
    let plan = plan_checkpoint(&ShardManifest::new(shards, 1).unwrap());
    let full = simulate_save(&plan, 4, 10.0).unwrap();
    assert_eq!(full.duration, 3.0);
    assert_eq!(full.peak_host_bytes, 65);
    let serial = simulate_save(&plan, 1, 10.0).unwrap();
    assert_eq!(serial.duration, sizes.iter().sum::<u64>() as f64 / 10.0);
    assert_eq!(serial.peak_host_bytes, 30);

    assert_eq!(simulate_save(&plan, 0, 10.0).unwrap_err().code(), "E_INVALID_SCENARIO");
    assert_eq!(simulate_save(&plan, 1, 0.0).unwrap_err().code(), "E_INVALID_SCENARIO");
}

#[test]
fn gc_examples() {
    let steps: Vec<u64> = (1..=10).map(|i| i * 100).collect();
    let keep3 = GcPolicy::new(3, 0).unwrap();
    assert_eq!(gc_retained(&steps, &keep3), BTreeSet::from([800, 900, 1000]));
    let every = GcPolicy::new(3, 500).unwrap();
    assert_eq!(gc_retained(&steps, &every), BTreeSet::from([500, 800, 900, 1000]));
    assert!(gc_retained(&[], &every).is_empty());
    assert_eq!(GcPolicy::new(0, 0).unwrap_err().code(), "E_INVALID_POLICY");
}

fn trace(durations: &[f64], utils: &[f64]) -> StepTrace {
    StepTrace::new(
        durations
            .iter()
            .zip(utils)
            .enumerate()
            .map(|(i, (&d, &u))| StepRecord { step: i as u64 + 1, duration: d, utilization: u })
            .collect(),
    )
    .unwrap()
}

#[test]
fn watchdog_examples() {
    let cfg = WatchdogConfig::default();
    let uniform = trace(&[1.0; 20], &[0.9; 20]);
    assert!(watchdog_scan(&uniform, &cfg).unwrap().is_empty());

    let mut d = vec![1.0, 1.1, 0.9, 1.0, 1.05, 1.0, 0.95, 1.0];
    d[6] = 10.0;
    let events = watchdog_scan(&trace(&d, &[0.9; 8]), &cfg).unwrap();
    // Oracle: the prior five durations sorted are 0.9 1.0 1.0 1.05 1.1, median 1.0.
    let median = 1.0;
    let expected: Vec<u64> = (5..d.len())
        .filter(|&i| d[i] > cfg.slow_factor * median)
        .map(|i| i as u64 + 1)
        .collect();
    assert_eq!(expected, vec![7]);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].step, 7);
    assert_eq!(events[0].kind, EventKind::SlowStep { duration: 10.0, median });

    let mut u = vec![0.9; 10];
    u[4..7].fill(0.0);
    let events = watchdog_scan(&trace(&[1.0; 10], &u), &cfg).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].step, 7);
    assert_eq!(events[0].kind, EventKind::LowUtilization { consecutive: 3 });

    let short = trace(&[1.0; 3], &[0.9; 3]);
    assert_eq!(watchdog_scan(&short, &cfg).unwrap_err().code(), "E_SHORT_TRACE");
    let unordered = vec![
        StepRecord { step: 2, duration: 1.0, utilization: 1.0 },
        StepRecord { step: 1, duration: 1.0, utilization: 1.0 },
    ];
    assert_eq!(StepTrace::new(unordered).unwrap_err().code(), "E_INVALID_TRACE");
}

#[test]
fn sdc_examples() {
    let comm = || synthetic_all_reduce(7, 4, 64);
    assert_eq!(sdc_check(comm, 3, |_, _| {}).unwrap(), SdcVerdict::Clean);
    let flip_second = |run: usize, v: &mut [f64]| {
        if run == 1 {
            flip_bit(v, 10, 3);
        }
    };
    assert_eq!(sdc_check(comm, 3, flip_second).unwrap(), SdcVerdict::Corrupt);
    let flip_all = |_: usize, v: &mut [f64]| flip_bit(v, 10, 3);
    assert_eq!(sdc_check(comm, 3, flip_all).unwrap(), SdcVerdict::Clean);
    assert_eq!(sdc_check(comm, 1, |_, _| {}).unwrap_err().code(), "E_TOO_FEW_REPEATS");
}

fn scenario(state_bytes: f64, failure_step: u64) -> RecoveryScenario {
    RecoveryScenario {
        state_bytes,
        checkpoint_interval_steps: 100,
        step_seconds: 2.0,
        remote_bps: 1e9,
        interconnect_bps: 1e11,
        failure_step,
        reschedule_seconds: 30.0,
        mode: RecoveryMode::RemoteRestore,
    }
}

#[test]
fn recovery_examples() {
    let zero = simulate_recovery(&scenario(0.0, 150)).unwrap();
    assert_eq!(zero.restore_seconds, 0.0);
    assert_eq!(zero.lost_work_seconds, 50.0 * 2.0);
    let at_ckpt = simulate_recovery(&scenario(1e12, 300)).unwrap();
    assert_eq!(at_ckpt.lost_work_seconds, 0.0);
    assert_eq!(at_ckpt.last_checkpoint_step, 300);

    let s = scenario(1e12, 300);
    let remote = simulate_recovery(&s).unwrap();
    let peer = simulate_recovery(&s.with_mode(RecoveryMode::PeerBroadcast)).unwrap();
    assert_eq!(remote.restore_seconds, 1e12 / 1e9);
    assert_eq!(peer.restore_seconds, 1e12 / 1e11);
    assert_eq!(remote.restore_seconds, 1000.0);
    assert_eq!(peer.restore_seconds, 10.0);
    assert_eq!(remote.total_downtime, 1000.0 + 30.0);

    let mut bad = s;
    bad.remote_bps = 0.0;
    assert_eq!(simulate_recovery(&bad).unwrap_err().code(), "E_INVALID_SCENARIO");
}

#[test]
fn scenario_files() {
    let s = Scenario::parse(
        "# recovery\nkind=recovery\nstate_bytes=1e12\ncheckpoint_interval_steps=100\n\
         step_seconds=2\nremote_bps=1e9\ninterconnect_bps=1e11\nfailure_step=250\n",
    )
    .unwrap();
    assert_eq!(s.kind(), Some("recovery"));
    assert_eq!(s.recovery_modes().unwrap().len(), 2);
    let r = s.recovery().unwrap();
    assert_eq!(r.failure_step, 250);
    assert_eq!(r.reschedule_seconds, 0.0);
    assert_eq!(Scenario::parse("a=1\na=2").unwrap_err().code(), "E_PARSE");
    assert_eq!(Scenario::parse("novalue").unwrap_err().code(), "E_PARSE");

    let save = Scenario::parse("replicas=2\nshards=5\nshard_bytes=10\nconcurrency_bound=2\ncopy_rate_bps=5").unwrap();
    let (m, bound, rate) = save.save().unwrap();
    assert_eq!((m.replicas(), m.shards().len(), bound, rate), (2, 5, 2, 5.0));

    let t = parse_trace("1 1.0 0.9\n2 1.1 0.8 # note\n\n3 0.9 0.7\n").unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(parse_trace("1 2").unwrap_err().code(), "E_PARSE");
    let w = Scenario::parse("window=4\naction=restart").unwrap().watchdog().unwrap();
    assert_eq!((w.window, w.action, w.consecutive), (4, WatchdogAction::Restart, 3));
}
