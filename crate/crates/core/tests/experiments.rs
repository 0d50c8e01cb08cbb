use std::collections::BTreeSet;

use composer::config::{golden_diff, serialize_golden, ComponentSchema, ConfigNode, ReplaceReport, ValueKind};
use composer::experiments::*;
use composer::layers::{mesh_shape, standard_registry};
use composer::mesh::DeviceCatalog;
use composer::runtime::ModuleRegistry;

fn count_kind(cfg: &ConfigNode, kind: &str) -> usize {
    let mut n = 0;
    cfg.for_each_node(|_, node| {
        if node.kind() == kind {
            n += 1;
        }
    });
    n
}

#[test]
fn registry_has_twenty_experiments() {
    let reg = standard_registry();
    let all = all_experiments(&reg).unwrap();
    assert_eq!(all.len(), 20);
    let moe = all.iter().filter(|(_, c)| count_kind(c, "MoE") > 0).count();
    assert_eq!(moe, 2);
    assert_eq!(build_experiment(&reg, "nope").unwrap_err().code(), "E_UNKNOWN_EXPERIMENT");
}

#[test]
fn compose_h100_and_unmatched() {
    let reg = standard_registry();
    let catalog = DeviceCatalog::builtin();
    let cfg = build_experiment(&reg, "txf_base").unwrap();
    let h100 = compose(&reg, &cfg, "gpu-H100-8", None, &catalog).unwrap();
    assert_eq!(mesh_shape(&h100).unwrap(), vec![1, 1, 8, 8]);
    let again = compose(&reg, &cfg, "gpu-H100-8", None, &catalog).unwrap();
    assert_eq!(serialize_golden(&h100), serialize_golden(&again));

    let other = compose(&reg, &cfg, "trn2-16", None, &catalog).unwrap();
    let diff = golden_diff(&serialize_golden(&cfg), &serialize_golden(&other)).unwrap();
    let paths: BTreeSet<String> = diff.into_iter().map(|d| d.path).collect();
    assert!(!paths.is_empty() && paths.iter().all(|p| p.starts_with("mesh_shape")), "{paths:?}");

    let none = compose(&reg, &cfg, "gpu-H100-8", Some(&[]), &catalog).unwrap();
    let diff = golden_diff(&serialize_golden(&cfg), &serialize_golden(&none)).unwrap();
    assert!(diff.iter().all(|d| d.path.starts_with("mesh_shape") || d.path.starts_with("mesh_rules")));

    assert_eq!(
        compose(&reg, &cfg, "gpu-missing", None, &catalog).unwrap_err().code(),
        "E_UNKNOWN_INSTANCE"
    );
}

#[test]
fn moe_audit_passes_without_code_changes() {
    let reg = standard_registry();
    let all = all_experiments(&reg).unwrap();
    let report = audit(&reg, &all, &MoeFeature::default());
    assert!(report.passed, "{:?}", report.experiments.iter().find(|e| e.error.is_some()));
    report.check().unwrap();
    assert_eq!(report.module_registry_digest_before, report.module_registry_digest_after);
    assert_eq!(report.mutators_used, 1);
    assert_eq!(report.num_experiments, 20);
    let expected: usize = all.iter().map(|(_, c)| count_kind(c, "FeedForward")).sum();
    assert_eq!(report.nodes_replaced, expected);
    assert!(report.experiments.iter().all(|e| e.loss.is_some_and(f64::is_finite)));
}

#[test]
fn rope_audit_replaces_every_nopos() {
    let reg = standard_registry();
    let all = all_experiments(&reg).unwrap();
    let report = audit(&reg, &all, &RopeFeature);
    report.check().unwrap();
    let expected: usize = all.iter().map(|(_, c)| count_kind(c, "NoPos")).sum();
    assert_eq!(report.nodes_replaced, expected);
    assert_eq!(expected, 40);
}

#[test]
fn empty_audit() {
    let reg = standard_registry();
    let report = audit(&reg, &[], &RopeFeature);
    assert_eq!((report.num_experiments, report.nodes_replaced), (0, 0));
    assert_eq!(report.num_modules, reg.num_layer_kinds());
    assert!(report.passed);
}

struct Intrusive;

impl Feature for Intrusive {
    fn name(&self) -> &str {
        "intrusive"
    }

    fn prepare(&self, registry: &mut ModuleRegistry) {
        registry
            .register_data_component(ComponentSchema::new("Extra").field("x", ValueKind::Int, 1i64))
            .unwrap();
    }

    fn mutate(&self, _: &ModuleRegistry, cfg: &ConfigNode) -> Result<(ConfigNode, ReplaceReport)> {
        Ok((cfg.clone(), ReplaceReport::default()))
    }
}

#[test]
fn audit_failures() {
    let reg = standard_registry();
    let all = all_experiments(&reg).unwrap();
    let report = audit(&reg, &all[..2], &Intrusive);
    assert!(!report.passed);
    assert_eq!(report.check().unwrap_err().code(), "E_MUTATED_CODE");

    let broken = MoeFeature { num_experts: 4, top_k: 9 };
    let report = audit(&reg, &all[..2], &broken);
    assert!(!report.passed);
    assert_eq!(report.check().unwrap_err().code(), "E_BROKEN_CONFIG");
}

#[test]
fn run_is_deterministic() {
    let reg = standard_registry();
    let cfg = build_experiment(&reg, "moe_base").unwrap();
    let opts = RunOptions { steps: 2, seed: 11, ..RunOptions::default() };
    let a = run(&reg, &cfg, opts).unwrap();
    let b = run(&reg, &cfg, opts).unwrap();
    assert_eq!(a, b);
    let keys: BTreeSet<&str> = a
        .final_summaries()
        .unwrap()
        .keys()
        .filter(|k| k.ends_with("load_balance_loss"))
        .map(String::as_str)
        .collect();
    assert_eq!(keys.len(), 2);
    let c = run(&reg, &cfg, RunOptions { seed: 12, ..opts }).unwrap();
    assert_ne!(a.steps[0].loss.to_bits(), c.steps[0].loss.to_bits());
    let bad = run(&reg, &cfg, RunOptions { batch: 0, ..opts }).unwrap_err();
    assert_eq!(bad.code(), "E_SHAPE");
}

#[test]
fn indivisible_heads_fail() {
    let reg = standard_registry();
    let mut cfg = build_experiment(&reg, "txf_base").unwrap();
    cfg.set_in_place("model.decoder.transformer.layer[0].self_attention.num_heads", 5i64)
        .unwrap();
    let err = run(&reg, &cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.code(), "E_SHAPE");
}

#[test]
fn registry_dir_round_trip() {
    let reg = standard_registry();
    let all = all_experiments(&reg).unwrap();
    let dir = std::env::temp_dir().join(format!("composer-registry-{}", std::process::id()));
    write_registry_dir(&all, &dir).unwrap();
    let back = load_registry_dir(&reg, &dir).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    let mut expected: Vec<(String, String)> = all.iter().map(|(n, c)| (n.clone(), serialize_golden(c))).collect();
    expected.sort();
    let got: Vec<(String, String)> = back.iter().map(|(n, c)| (n.clone(), serialize_golden(c))).collect();
    assert_eq!(got, expected);
}
