use bulktx::config::{EngineConfig, StrategyChoice};
use bulktx::driver::{oracle_dump, run_generated};
use bulktx::planner::{calibrate, CalibrationPoint};
use bulktx::report::{to_csv, to_text};
use bulktx::workload::{
    generate, parse_workload_file, write_workload_file, GeneratedWorkload, WorkloadKind,
    WorkloadSpec,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bulktx", about = "Bulk transaction execution engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workload file (and optionally its schema file).
    Gen(GenArgs),
    /// Execute a workload and emit a report.
    Run(RunArgs),
    /// Dump the sequential-oracle snapshot of a workload for diffing.
    Oracle(OracleArgs),
    /// Grid-search grouping passes and partition size by measured throughput.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// micro | tpcb | tm1
    #[arg(long, default_value = "micro")]
    kind: String,
    #[arg(long, default_value_t = 8)]
    types: u32,
    #[arg(long, default_value_t = 16)]
    compute: u32,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 65_536)]
    tuples: u64,
    #[arg(long, default_value_t = 16_384)]
    txns: u64,
    #[arg(long, default_value_t = 8)]
    scale: u64,
    #[arg(long, default_value_t = 0.0)]
    abort_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Workload output path.
    #[arg(long)]
    out: PathBuf,
    /// Schema output path (optional; `run` can regenerate it from the spec).
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EngineFlags {
    /// Engine config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// tpl | part | kset | tpl-relaxed | part-relaxed | auto | seq
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    lanes: Option<usize>,
    #[arg(long)]
    warp_size: Option<usize>,
    #[arg(long)]
    partition_size: Option<u64>,
    #[arg(long)]
    bits_per_pass: Option<u32>,
    /// Pass count for type grouping; "full" groups completely.
    #[arg(long)]
    passes: Option<String>,
    #[arg(long)]
    w0_bar: Option<usize>,
    #[arg(long)]
    c_bar: Option<usize>,
    #[arg(long)]
    d_bar: Option<u32>,
    #[arg(long)]
    max_bulk: Option<usize>,
    #[arg(long)]
    interval_us: Option<u64>,
    #[arg(long)]
    arrival_rate: Option<f64>,
    /// Lock table slots ("exact" or a fixed hashed size).
    #[arg(long)]
    lock_slots: Option<String>,
    #[arg(long)]
    watchdog_secs: Option<u64>,
    /// Disable the per-run sequential-oracle equivalence gate.
    #[arg(long)]
    no_verify: bool,
    /// Run the data-parallel loops sequentially.
    #[arg(long)]
    no_parallel: bool,
}

impl EngineFlags {
    fn build(&self) -> Result<EngineConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
                EngineConfig::parse(&text).map_err(|e| e.to_string())?
            }
            None => EngineConfig::default(),
        };
        if let Some(s) = &self.strategy {
            cfg.strategy =
                StrategyChoice::parse(s).ok_or_else(|| format!("unknown strategy {s:?}"))?;
        }
        if let Some(v) = self.lanes {
            cfg.lane_count = v;
        }
        if let Some(v) = self.warp_size {
            cfg.warp_size = v;
        }
        if let Some(v) = self.partition_size {
            cfg.partition_size = v;
        }
        if let Some(v) = self.bits_per_pass {
            cfg.bits_per_pass = v;
        }
        if let Some(v) = &self.passes {
            cfg.set("passes", v)?;
        }
        if let Some(v) = self.w0_bar {
            cfg.w0_bar = Some(v);
        }
        if let Some(v) = self.c_bar {
            cfg.c_bar = v;
        }
        if let Some(v) = self.d_bar {
            cfg.d_bar = Some(v);
        }
        if let Some(v) = self.max_bulk {
            cfg.max_bulk = v;
        }
        if let Some(v) = self.interval_us {
            cfg.interval_us = v;
        }
        if let Some(v) = self.arrival_rate {
            cfg.arrival_rate = v;
        }
        if let Some(v) = &self.lock_slots {
            cfg.set("lock_slots", v)?;
        }
        if let Some(v) = self.watchdog_secs {
            cfg.watchdog_secs = v;
        }
        if self.no_verify {
            cfg.verify = false;
        }
        if self.no_parallel {
            cfg.parallel = false;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    workload: PathBuf,
    /// Optional schema file; defaults to regenerating from the spec header.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
    /// Write the machine-readable report here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    workload: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    workload: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
    /// Comma-separated grouping pass counts to try.
    #[arg(long, default_value = "0,1,2,3")]
    grid_passes: String,
    /// Comma-separated partition sizes to try.
    #[arg(long, default_value = "32,64,128,256,512")]
    grid_partition_sizes: String,
    /// Write the winning configuration here as a config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_workload(path: &PathBuf, schema: Option<&PathBuf>) -> Result<GeneratedWorkload, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut w = parse_workload_file(&text).map_err(|e| e.to_string())?;
    if let Some(s) = schema {
        w.schema_text =
            std::fs::read_to_string(s).map_err(|e| format!("{}: {e}", s.display()))?;
    }
    Ok(w)
}

fn cmd_gen(a: GenArgs) -> Result<(), String> {
    let kind = WorkloadKind::parse(&a.kind).ok_or_else(|| format!("unknown kind {:?}", a.kind))?;
    let spec = WorkloadSpec {
        kind,
        type_count: a.types,
        compute: a.compute,
        alpha: a.alpha,
        tuple_count: a.tuples,
        txn_count: a.txns,
        scale: a.scale,
        abort_rate: a.abort_rate,
        seed: a.seed,
    };
    let w = generate(&spec).map_err(|e| e.to_string())?;
    std::fs::write(&a.out, write_workload_file(&w)).map_err(|e| e.to_string())?;
    eprintln!("wrote {} transactions to {}", w.txns.len(), a.out.display());
    if let Some(schema) = &a.schema_out {
        std::fs::write(schema, &w.schema_text).map_err(|e| e.to_string())?;
        eprintln!("wrote schema to {}", schema.display());
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), String> {
    let cfg = a.engine.build()?;
    let w = load_workload(&a.workload, a.schema.as_ref())?;
    let result = run_generated(&w, &cfg, false).map_err(|e| e.to_string())?;
    if let Some(csv) = &a.csv {
        std::fs::write(csv, to_csv(&result.report)).map_err(|e| e.to_string())?;
    }
    print!("{}", to_text(&result.report));
    if result.report.failed.is_some() {
        return Err("run failed (partial metrics reported)".into());
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<(), String> {
    let cfg = a.engine.build()?;
    let w = load_workload(&a.workload, None)?;
    let dump = oracle_dump(&w, &cfg).map_err(|e| e.to_string())?;
    match &a.out {
        Some(p) => std::fs::write(p, dump).map_err(|e| e.to_string())?,
        None => print!("{dump}"),
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), String> {
    let base = a.engine.build()?;
    let w = load_workload(&a.workload, None)?;
    let grid_passes: Vec<u32> = parse_list(&a.grid_passes)?;
    let grid_sizes: Vec<u64> = parse_list(&a.grid_partition_sizes)?;
    let defaults = CalibrationPoint {
        passes: base.grouping(bulktx::workload::registered_types(&w.spec)).passes,
        partition_size: base.partition_size,
        thresholds: base.thresholds(),
    };
    let (best, curve) = calibrate(
        &grid_passes,
        &grid_sizes,
        &[],
        defaults,
        !w.txns.is_empty(),
        |point| {
            let mut cfg = base.clone();
            cfg.passes = Some(point.passes);
            cfg.partition_size = point.partition_size;
            match run_generated(&w, &cfg, false) {
                Ok(r) => r.report.throughput_ktps,
                Err(_) => f64::NEG_INFINITY,
            }
        },
    );
    for (point, ktps) in &curve {
        println!(
            "passes={} partition_size={} -> {:.3} ktps",
            point.passes, point.partition_size, ktps
        );
    }
    println!(
        "best: passes={} partition_size={}",
        best.passes, best.partition_size
    );
    if let Some(out) = &a.out {
        let mut cfg_text = format!(
            "passes = {}\npartition_size = {}\nw0_bar = {}\nc_bar = {}\nd_bar = {}\n",
            best.passes,
            best.partition_size,
            best.thresholds.w0_bar,
            best.thresholds.c_bar,
            best.thresholds.d_bar
        );
        cfg_text.insert_str(0, "# calibrated engine configuration\n");
        std::fs::write(out, cfg_text).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
