//! `ris`: run incremental schemes for rate-independent systems, sweep
//! parameters, and verify stored runs against recomputed diagnostics.

mod config;
mod ops;

use clap::{Args, Parser, Subcommand};
use config::{check_mu_exclusive, CliError, CliResult, RunSpec, SweepFile};
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ris",
    version,
    about = "Incremental schemes and a-posteriori diagnostics for rate-independent systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scheme on one problem; writes trace.csv, curve.csv,
    /// diagnostics.json and run.json
    Run(RunArgs),
    /// Run a list of parameter sets concurrently; writes per-row artifacts
    /// and one summary.csv
    Sweep(SweepArgs),
    /// Recompute all diagnostics of a stored run from its files alone and
    /// compare with the stored JSON at 1e-12
    Verify(VerifyArgs),
    /// Print the built-in problem ids with dimensions and final times
    ListProblems,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with the same keys as the flags below; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem id: toy51[:kappa=K], toy52, chain:n=N, coupled:n=N
    #[arg(long)]
    problem: Option<String>,
    /// global-incremental | viscous | visco-energetic | local-min |
    /// relaxed-local-min | alternate-min
    #[arg(long)]
    scheme: Option<String>,
    /// Number of uniform grid steps
    #[arg(long, alias = "N")]
    n: Option<usize>,
    /// Step radius for local-min
    #[arg(long)]
    h: Option<f64>,
    /// Viscous penalty for relaxed-local-min and alternate-min
    #[arg(long)]
    eta: Option<f64>,
    /// Inner stopping threshold on the V-increment
    #[arg(long)]
    delta: Option<f64>,
    /// Viscosity for the viscous scheme
    #[arg(long)]
    mu: Option<f64>,
    /// Expression for mu over tau, sqrt, * and literals, evaluated at
    /// tau = T/n, e.g. '0.1*sqrt(tau)'
    #[arg(long)]
    mu_rule: Option<String>,
    /// Fixed ratio mu/tau for visco-energetic
    #[arg(long)]
    ratio: Option<f64>,
    /// Safety cap on inner minimisations
    #[arg(long)]
    max_outer_iters: Option<usize>,
    /// Measure state segments in the Z norm (relaxed-local-min only)
    #[arg(long)]
    z_parametrization: bool,
    /// Artifact families to write: csv, json or csv,json
    #[arg(long)]
    formats: Option<String>,
    /// Output directory (default: $RIS_OUTPUT_DIR, else .)
    #[arg(long, short = 'o', alias = "output-dir")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with {"rows": [run spec, ...]}
    #[arg(long)]
    config: PathBuf,
    /// Concurrent rows (default: one per core)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output root; each row gets its own subdirectory
    #[arg(long, short = 'o', alias = "output-dir")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run directory holding trace.csv, curve.csv, diagnostics.json, run.json
    dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Verify(args) => ops::cmd_verify(&args.dir),
        Cmd::ListProblems => cmd_list_problems(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &PathBuf) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> CliResult<u8> {
    let file_spec: RunSpec = match &args.config {
        Some(path) => read_json_file(path)?,
        None => RunSpec::default(),
    };
    let flag_spec = RunSpec {
        problem: args.problem,
        scheme: args.scheme,
        n: args.n,
        h: args.h,
        eta: args.eta,
        delta: args.delta,
        mu: args.mu,
        mu_rule: args.mu_rule,
        ratio: args.ratio,
        max_outer_iters: args.max_outer_iters,
        z_parametrization: args.z_parametrization.then_some(true),
        formats: args.formats,
        label: None,
    };
    let spec = config::merge_specs(file_spec, flag_spec);
    check_mu_exclusive(&spec)?;
    let out_dir = ops::resolve_out(args.out);
    let (art, resolved) = ops::execute(&spec)?;
    ops::write_artifacts(&out_dir, &resolved, &art)?;
    println!(
        "{}: {} steps, S = {:.6e}, energy residual = {:.3e}, {}",
        out_dir.display(),
        art.trace.solve_count(),
        art.curve.arc_length(),
        art.report.energy_residual,
        ops::termination_word(art.trace.terminated),
    );
    Ok(match art.trace.terminated {
        ris::Termination::ReachedT => 0,
        ris::Termination::CapHit => 2,
    })
}

fn cmd_sweep(args: SweepArgs) -> CliResult<u8> {
    let sweep: SweepFile = read_json_file(&args.config)?;
    if sweep.rows.is_empty() {
        return Err(CliError::new("sweep row list is empty"));
    }
    let root = ops::resolve_out(args.out);
    std::fs::create_dir_all(&root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::new(format!("thread pool: {e}")))?;
    let outcomes: Vec<ops::RowOutcome> = pool.install(|| {
        sweep
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| ops::run_sweep_row(&root, i, row))
            .collect()
    });
    ops::write_summary(&root, &outcomes)?;
    let mut failed = 0usize;
    for o in &outcomes {
        println!("{}: {}", o.dir_name, o.status);
        if o.status.starts_with("error") {
            failed += 1;
        }
    }
    println!(
        "{} rows, {} failed, summary in {}",
        outcomes.len(),
        failed,
        root.join("summary.csv").display()
    );
    Ok(if failed > 0 { 2 } else { 0 })
}

fn cmd_list_problems() -> CliResult<u8> {
    println!("toy51:kappa=1   dim 1       T = 1     double-well landscape with one jump; kappa > 0, default 1");
    println!("toy52           dim 1       T = 1.5   softening energy, thresholds 10; no parameters");
    println!("chain:n=4       dim n       T = 2     semilinear chain, unit thresholds; n >= 1 required");
    println!("coupled:n=8     dim n + n   T = 2     quadratic/double-well pair for alternate-min; n >= 1 required");
    Ok(0)
}
