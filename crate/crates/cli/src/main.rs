//! `borglev <kind> --config <path> [--out <dir>] [--threads N] [--seed S]`

mod cache;
mod config;
mod context;
mod error;
mod experiments;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::cache::SpectralCache;
use crate::config::ExperimentConfig;
use crate::context::RunContext;
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "borglev", version, about = "Numerical experiments on multidimensional Borg-Levinson stability")]
struct Cli {
    /// Experiment kind: eig, weyl, dtn, identity, recover, stability, asympt-noise or lemmas.
    kind: String,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `out`, else `out/<kind>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    threads: Option<usize>,
    /// Run seed mixed into random potentials.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("{} finished; outputs in {}", cli.kind, dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<PathBuf> {
    let started = Instant::now();
    let experiment = experiments::experiment_by_name(&cli.kind).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown kind `{}`; available kinds:\n{}",
            cli.kind,
            experiments::catalogue()
        ))
    })?;
    let (cfg, hash) = ExperimentConfig::load(&cli.config)?;
    if let Some(k) = &cfg.kind {
        config::require(k == &cli.kind, format!("config is for `{k}`, not `{}`", cli.kind))?;
    }
    if experiment.needs_grid() {
        cfg.grid()?;
    }
    if cli.threads == Some(0) {
        return Err(CliError::Validation("--threads must be positive".into()));
    }
    let plan = experiment.plan(&cfg)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cli.kind));
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);

    borglev_core::sequential_linear_algebra();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot size the worker pool: {e}")))?;
    }
    std::fs::create_dir_all(&out)?;
    let mut ctx = RunContext {
        cache: SpectralCache::from_env(&out),
        out: out.clone(),
        seed,
        manifest: RunManifest::new(&cli.kind, &hash, seed, cli.threads),
    };
    let result = plan.execute(&mut ctx);
    ctx.manifest.finish(started, result.as_ref().err().map(|e| e.to_string()));
    ctx.manifest.write(&out)?;
    result.map(|_| out)
}
