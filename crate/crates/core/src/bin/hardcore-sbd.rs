//! Experiment runner: binds JSON configs to the library operations and
//! leaves reproducible artifacts (plus a manifest) in the output directory.

// `!(x >= lo)` rejects NaN where `x < lo` would not
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use hardcore_sbd::analysis::{fit_decay_rate, rho_sweep, write_sweep_csv};
use hardcore_sbd::cftp::{sample_stationary, write_sidecar, CftpOutcome};
use hardcore_sbd::check::{run_checks, slab_demo};
use hardcore_sbd::config::{
    parse_config, CftpConfig, CheckConfig, CoupleConfig, Manifest, SimulateConfig,
    SlabDemoConfig, SweepConfig,
};
use hardcore_sbd::coupling::{simulate_coupled, DensityRow, DensitySeries};
use hardcore_sbd::dynamics::{generate_initial, simulate, write_snapshot_csv};
use hardcore_sbd::{Configuration, Error, InitKind, Result};

#[derive(Parser)]
#[command(name = "hardcore-sbd", version, about = "Hard-core spatial birth-death simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config (flat object or a previously emitted manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward dynamics: trajectory and final snapshot.
    Simulate(RunArgs),
    /// Coupled pair: density series and decay fit.
    Couple(RunArgs),
    /// Coupling from the past: a batch of stationary samples.
    Cftp(RunArgs),
    /// Stationary statistics across rho values.
    Sweep(RunArgs),
    /// Invariant and property suite.
    Check(RunArgs),
    /// Dependency-graph statistics for one time slab.
    SlabDemo(RunArgs),
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_NO_COALESCENCE: u8 = 3;

fn verbose() -> bool {
    std::env::var("HARDCORE_SBD_LOG").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn log(msg: impl AsRef<str>) {
    if verbose() {
        eprintln!("hardcore-sbd: {}", msg.as_ref());
    }
}

fn load_config<T: Default + DeserializeOwned>(args: &RunArgs, command: &str) -> Result<T> {
    match &args.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            parse_config(&text, command)
        }
    }
}

fn write_manifest<T: Serialize>(out: &Path, command: &str, seed: u64, cfg: &T) -> Result<()> {
    let manifest = Manifest::new(command, seed, serde_json::to_value(cfg).map_err(io_err)?);
    write_json(&out.join("manifest.json"), &manifest)
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io_err)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism) // 0 means "all available"
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))
}

fn cmd_simulate(args: &RunArgs) -> Result<u8> {
    let mut cfg: SimulateConfig = load_config(args, "simulate")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    if !(cfg.t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("t_end = {} must be >= 0", cfg.t_end)));
    }
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "simulate", cfg.params.seed, &cfg)?;
    let init = generate_initial(cfg.init, cfg.lambda_prop, &cfg.params)?;
    log(format!("simulate: {} initial points", init.len()));
    let (traj, final_state) = simulate(&cfg.params, init, 0.0, cfg.t_end, false)?;
    let mut csv = Vec::new();
    writeln!(csv, "t,count")?;
    for (t, n) in &traj.snapshots {
        writeln!(csv, "{t:.16e},{n}")?;
    }
    fs::write(args.out.join("trajectory.csv"), csv)?;
    let mut snap = Vec::new();
    write_snapshot_csv(&final_state, &mut snap)?;
    fs::write(args.out.join("snapshot.csv"), snap)?;
    log(format!(
        "simulate: {} events applied, {} points at t = {}",
        traj.n_events,
        final_state.len(),
        cfg.t_end
    ));
    Ok(0)
}

fn mean_series(all: &[DensitySeries]) -> DensitySeries {
    let n = all.len() as f64;
    let rows = (0..all[0].rows.len())
        .map(|k| {
            let mut acc = DensityRow { t: all[0].rows[k].t, beta_r: 0.0, beta_a: 0.0, beta_z: 0.0, beta_s: 0.0 };
            for s in all {
                acc.beta_r += s.rows[k].beta_r / n;
                acc.beta_a += s.rows[k].beta_a / n;
                acc.beta_z += s.rows[k].beta_z / n;
                acc.beta_s += s.rows[k].beta_s / n;
            }
            acc
        })
        .collect();
    DensitySeries { rows }
}

fn cmd_couple(args: &RunArgs) -> Result<u8> {
    let mut cfg: CoupleConfig = load_config(args, "couple")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    if cfg.replicas == 0 {
        return Err(Error::InvalidParams("replicas must be >= 1".into()));
    }
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "couple", cfg.params.seed, &cfg)?;
    let pool = thread_pool(cfg.parallelism)?;
    let series: Vec<DensitySeries> = pool.install(|| {
        (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|i| {
                let pi = cfg.params.replica(i);
                let init2 = generate_initial(InitKind::Matern2, cfg.init2_lambda_prop, &pi)?;
                let (s, _) = simulate_coupled(
                    &pi,
                    Configuration::new(pi.window()),
                    init2,
                    cfg.t_end,
                    cfg.sample_dt,
                )?;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mean = mean_series(&series);
    let mut csv = Vec::new();
    mean.write_csv(&mut csv)?;
    fs::write(args.out.join("density.csv"), csv)?;
    match fit_decay_rate(&mean, cfg.t_min_fit) {
        Ok(fit) => {
            log(format!("couple: c_hat = {:.4}, r2 = {:.4}", fit.c_hat, fit.r2));
            write_json(&args.out.join("decay_fit.json"), &fit)?;
        }
        Err(e) => {
            write_json(
                &args.out.join("decay_fit.json"),
                &serde_json::json!({ "error": e.to_string() }),
            )?;
        }
    }
    Ok(0)
}

fn cmd_cftp(args: &RunArgs) -> Result<u8> {
    let mut cfg: CftpConfig = load_config(args, "cftp")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    if cfg.replicas == 0 {
        return Err(Error::InvalidParams("replicas must be >= 1".into()));
    }
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "cftp", cfg.params.seed, &cfg)?;
    let pool = thread_pool(cfg.parallelism)?;
    let outcomes: Vec<CftpOutcome> = pool.install(|| {
        (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|i| sample_stationary(&cfg.params.replica(i), cfg.t_init, cfg.t_max))
            .collect::<Result<Vec<_>>>()
    })?;
    let results: Vec<_> = outcomes.iter().map(|o| o.result).collect();
    write_json(&args.out.join("results.json"), &results)?;
    for (i, o) in outcomes.iter().enumerate() {
        let mut snap = Vec::new();
        write_snapshot_csv(&o.sample, &mut snap)?;
        fs::write(args.out.join(format!("sample_{i:03}.csv")), snap)?;
        let mut sidecar = Vec::new();
        write_sidecar(&o.result, &mut sidecar)?;
        fs::write(args.out.join(format!("sample_{i:03}.json")), sidecar)?;
    }
    let coalesced = outcomes.iter().filter(|o| o.result.coalesced).count();
    log(format!("cftp: {coalesced}/{} replicas coalesced", cfg.replicas));
    if coalesced == 0 {
        let why = outcomes
            .iter()
            .find_map(|o| o.diagnostic.clone())
            .unwrap_or_else(|| "no replica coalesced".to_string());
        eprintln!("hardcore-sbd: cftp failed to coalesce: {why}");
        return Ok(EXIT_NO_COALESCENCE);
    }
    Ok(0)
}

fn cmd_sweep(args: &RunArgs) -> Result<u8> {
    let mut cfg: SweepConfig = load_config(args, "sweep")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "sweep", cfg.params.seed, &cfg)?;
    let rows = rho_sweep(
        &cfg.params,
        &cfg.rhos,
        cfg.t_long,
        cfg.t_init,
        cfg.t_max,
        cfg.matern_lambda,
    )?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    fs::write(args.out.join("sweep.csv"), csv)?;
    Ok(0)
}

fn cmd_check(args: &RunArgs) -> Result<u8> {
    let mut cfg: CheckConfig = load_config(args, "check")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "check", cfg.params.seed, &cfg)?;
    let report = run_checks(&cfg.params, cfg.quick)?;
    write_json(&args.out.join("check_report.json"), &report)?;
    for item in &report.items {
        let mark = if item.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {}", item.name, item.detail);
    }
    println!("{} events applied", report.events_applied);
    if report.all_passed() {
        Ok(0)
    } else {
        Ok(EXIT_RUNTIME)
    }
}

fn cmd_slab_demo(args: &RunArgs) -> Result<u8> {
    let mut cfg: SlabDemoConfig = load_config(args, "slab-demo")?;
    if let Some(s) = args.seed {
        cfg.params.seed = s;
    }
    cfg.params.validate()?;
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, "slab-demo", cfg.params.seed, &cfg)?;
    let report = slab_demo(&cfg.params, cfg.epsilon, cfg.seeds)?;
    write_json(&args.out.join("slab_demo.json"), &report)?;
    println!(
        "slab width {}: {:.1} events/slab, {:.1} components/slab, largest component {}, {} equivalence mismatches",
        report.epsilon,
        report.mean_events,
        report.mean_components,
        report.max_component,
        report.equivalence_mismatches
    );
    if report.equivalence_mismatches == 0 {
        Ok(0)
    } else {
        Ok(EXIT_RUNTIME)
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Couple(a) => cmd_couple(a),
        Command::Cftp(a) => cmd_cftp(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
        Command::SlabDemo(a) => cmd_slab_demo(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hardcore-sbd: error: {e}");
            let code = match e {
                Error::Config(_) | Error::InvalidParams(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
            ExitCode::from(code)
        }
    }
}
