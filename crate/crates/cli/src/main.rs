use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use composer::config::{golden_diff, serialize_golden, ConfigNode};
use composer::experiments::{
    all_experiments, audit, build_experiment, compose, feature_by_name, load_registry_dir,
    load_rules, run, write_registry_dir, ComposerError, RunOptions,
};
use composer::layers::standard_registry;
use composer::mesh::{aot_analyze, AotReport, DeviceCatalog};
use composer::runtime::{ModuleRegistry, Workload};
use composer::sim::{
    parse_trace, plan_checkpoint, simulate_recovery, simulate_save, watchdog_scan, EventKind,
    Scenario,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_OOM: u8 = 3;
const EXIT_AUDIT: u8 = 4;

#[derive(Parser)]
#[command(name = "composer", version, about = "Compose, analyze and simulate training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the matching mesh rule and print or write the golden config.
    Compose {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        instance_type: String,
        /// MeshRules golden file replacing the experiment's own rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        emit_golden: Option<PathBuf>,
        /// Read experiments from golden files instead of the built-in registry.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Ahead-of-time memory and flops analysis.
    Aot {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        instance_type: String,
        #[arg(long)]
        batch: u64,
        #[arg(long)]
        seq_len: u64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Run forward steps on synthetic data.
    Run {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        instance_type: String,
        #[arg(long, default_value_t = 1)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = 8)]
        seq_len: usize,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Apply one feature to every experiment and check nothing but configs changed.
    Audit {
        #[arg(long)]
        feature: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    Simulate {
        kind: SimKind,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Path-level differences between two golden files. Exits 1 when they differ.
    GoldenDiff { a: PathBuf, b: PathBuf },
    /// Write every built-in experiment as a golden file.
    ExportRegistry { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Save,
    Recovery,
    Watchdog,
}

struct Failure {
    exit: u8,
    message: String,
}

impl From<ComposerError> for Failure {
    fn from(e: ComposerError) -> Self {
        let exit = match e.code() {
            "E_OOM" => EXIT_OOM,
            "E_MUTATED_CODE" | "E_BROKEN_CONFIG" | "E_AUDIT_FAILED" => EXIT_AUDIT,
            _ => EXIT_CONFIG,
        };
        Self {
            exit,
            message: format!("{}: {e}", e.code()),
        }
    }
}

macro_rules! from_lib_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                ComposerError::from(e).into()
            }
        }
    )*};
}

from_lib_error!(
    composer::config::ConfigError,
    composer::mesh::MeshError,
    composer::sim::SimError,
    std::io::Error
);

type CliResult = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        exit: EXIT_CONFIG,
        message: format!("E_IO: {}: {e}", path.display()),
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn experiment(registry: &ModuleRegistry, dir: Option<&Path>, name: &str) -> Result<ConfigNode, Failure> {
    match dir {
        None => Ok(build_experiment(registry, name)?),
        Some(dir) => load_registry_dir(registry, dir)?
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| ComposerError::UnknownExperiment(name.to_string()).into()),
    }
}

fn composed(
    registry: &ModuleRegistry,
    dir: Option<&Path>,
    name: &str,
    instance_type: &str,
    catalog: &DeviceCatalog,
) -> Result<ConfigNode, Failure> {
    let cfg = experiment(registry, dir, name)?;
    Ok(compose(registry, &cfg, instance_type, None, catalog)?)
}

fn print_aot(r: &AotReport) {
    println!("instance_type {}", r.instance_type);
    println!("mesh {:?} over {:?}", r.mesh_shape, r.mesh_axes);
    println!("batch {} seq_len {} per_replica_batch {}", r.batch, r.seq_len, r.per_replica_batch);
    println!("param_bytes {}", r.param_bytes);
    println!("optimizer_bytes {}", r.optimizer_bytes);
    println!("saved_activation_bytes {}", r.saved_activation_bytes);
    println!("offloaded_host_bytes {}", r.offloaded_host_bytes);
    println!("device_bytes {} of {}", r.device_bytes, r.hbm_bytes);
    println!("total_flops {} (recompute {})", r.total_flops, r.recompute_flops);
    println!("comm_bytes {}", r.comm_bytes);
    println!("step_seconds {:.6} mfu {:.4}", r.step_seconds, r.mfu);
    println!("oom {}", r.oom);
}

fn execute(cli: Cli) -> CliResult {
    let registry = standard_registry();
    match cli.command {
        Command::Compose { experiment: name, instance_type, rules, emit_golden, registry: dir } => {
            let catalog = DeviceCatalog::from_env()?;
            let cfg = experiment(&registry, dir.as_deref(), &name)?;
            let rules = rules.map(|p| load_rules(&registry, &p)).transpose()?;
            let out = compose(&registry, &cfg, &instance_type, rules.as_deref(), &catalog)?;
            let golden = serialize_golden(&out);
            match emit_golden {
                Some(path) => std::fs::write(path, golden)?,
                None => print!("{golden}"),
            }
            Ok(0)
        }
        Command::Aot { experiment: name, instance_type, batch, seq_len, json: as_json, registry: dir } => {
            let catalog = DeviceCatalog::from_env()?;
            let cfg = composed(&registry, dir.as_deref(), &name, &instance_type, &catalog)?;
            let report = aot_analyze(&registry, &cfg, &instance_type, &catalog, Workload::new(batch, seq_len))?;
            if as_json {
                println!("{}", json(&report));
            } else {
                print_aot(&report);
            }
            Ok(if report.oom { EXIT_OOM } else { 0 })
        }
        Command::Run { experiment: name, instance_type, steps, seed, batch, seq_len, json: as_json, registry: dir } => {
            let catalog = DeviceCatalog::from_env()?;
            let cfg = composed(&registry, dir.as_deref(), &name, &instance_type, &catalog)?;
            let summary = run(&registry, &cfg, RunOptions { steps, seed, batch, seq_len })?;
            if as_json {
                println!("{}", json(&summary));
                return Ok(0);
            }
            for s in &summary.steps {
                println!("step {} loss {:?}", s.step, s.loss);
            }
            for (k, v) in summary.final_summaries().into_iter().flatten() {
                let v: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                println!("{k} {}", v.join(" "));
            }
            Ok(0)
        }
        Command::Audit { feature, registry: dir, json: as_json } => {
            let f = feature_by_name(&feature).ok_or_else(|| Failure {
                exit: EXIT_CONFIG,
                message: format!("E_UNKNOWN_FEATURE: '{feature}' (expected moe or rope)"),
            })?;
            let experiments = match dir {
                Some(d) => load_registry_dir(&registry, &d)?,
                None => all_experiments(&registry)?,
            };
            let report = audit(&registry, &experiments, f.as_ref());
            if as_json {
                println!("{}", json(&report));
            } else {
                println!("feature {}", report.feature);
                println!("num_experiments {}", report.num_experiments);
                println!("num_modules {}", report.num_modules);
                println!("num_variants {}", report.num_variants);
                println!("nodes_replaced {}", report.nodes_replaced);
                println!("mutators_used {}", report.mutators_used);
                println!("module_registry_digest_before {}", report.module_registry_digest_before);
                println!("module_registry_digest_after {}", report.module_registry_digest_after);
                for e in &report.experiments {
                    let status = match &e.error {
                        Some(err) => format!("error {err}"),
                        None if !e.encapsulated => "leaked".to_string(),
                        None => format!("ok loss {:?}", e.loss.unwrap_or(f64::NAN)),
                    };
                    println!("  {} replaced {} {status}", e.experiment, e.replaced_paths.len());
                }
                println!("passed {}", report.passed);
            }
            match report.check() {
                Ok(()) => Ok(0),
                Err(e) => {
                    eprintln!("{}: {e}", e.code());
                    Ok(EXIT_AUDIT)
                }
            }
        }
        Command::Simulate { kind, scenario, json: as_json } => simulate(kind, &scenario, as_json),
        Command::GoldenDiff { a, b } => {
            let diff = golden_diff(&read(&a)?, &read(&b)?)?;
            for d in &diff {
                println!(
                    "{}: {} -> {}",
                    d.path,
                    d.old.as_deref().unwrap_or("<absent>"),
                    d.new.as_deref().unwrap_or("<absent>")
                );
            }
            Ok(u8::from(!diff.is_empty()))
        }
        Command::ExportRegistry { dir } => {
            let all = all_experiments(&registry)?;
            write_registry_dir(&all, &dir)?;
            println!("wrote {} experiments to {}", all.len(), dir.display());
            Ok(0)
        }
    }
}

fn simulate(kind: SimKind, path: &Path, as_json: bool) -> CliResult {
    let scenario = Scenario::parse(&read(path)?)?;
    match kind {
        SimKind::Save => {
            let (manifest, bound, rate) = scenario.save()?;
            let plan = plan_checkpoint(&manifest);
            let result = simulate_save(&plan, bound, rate)?;
            if as_json {
                println!("{}", json(&serde_json::json!({ "plan": plan.sizes(), "result": result })));
            } else {
                println!("shards per replica {:?}", plan.sizes());
                println!("duration_seconds {:?}", result.duration);
                println!("peak_host_bytes {}", result.peak_host_bytes);
            }
        }
        SimKind::Recovery => {
            let base = scenario.recovery()?;
            let reports = scenario
                .recovery_modes()?
                .into_iter()
                .map(|m| simulate_recovery(&base.with_mode(m)))
                .collect::<Result<Vec<_>, _>>()?;
            if as_json {
                println!("{}", json(&reports));
            }
            for r in reports.iter().filter(|_| !as_json) {
                println!(
                    "{:?}: last_checkpoint {} lost_work {:.1}s restore {:.1}s reschedule {:.1}s total {:.1}s",
                    r.mode,
                    r.last_checkpoint_step,
                    r.lost_work_seconds,
                    r.restore_seconds,
                    r.reschedule_seconds,
                    r.total_downtime
                );
            }
        }
        SimKind::Watchdog => {
            let cfg = scenario.watchdog()?;
            let trace_file = scenario.raw("trace").ok_or_else(|| Failure {
                exit: EXIT_CONFIG,
                message: "E_INVALID_SCENARIO: missing key 'trace'".into(),
            })?;
            let trace_path = path.parent().unwrap_or(Path::new(".")).join(trace_file);
            let trace = parse_trace(&read(&trace_path)?)?;
            let events = watchdog_scan(&trace, &cfg)?;
            if as_json {
                println!("{}", json(&events));
            }
            for e in events.iter().filter(|_| !as_json) {
                match e.kind {
                    EventKind::SlowStep { duration, median } => println!(
                        "step {} slow {duration:?}s vs median {median:?}s -> {:?}",
                        e.step, e.action
                    ),
                    EventKind::LowUtilization { consecutive } => println!(
                        "step {} low utilization for {consecutive} steps -> {:?}",
                        e.step, e.action
                    ),
                }
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.exit)
        }
    }
}
