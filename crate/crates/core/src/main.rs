use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vortex_core::commands::{self, Context};
use vortex_core::config::RunConfig;
use vortex_core::{Error, Result};

/// Vortex-encoded optical preprocessing with a small dense network.
#[derive(Parser, Debug)]
#[command(name = "vortex", version)]
struct Cli {
    /// Key=value config file applied on top of the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Print every config key with its default value and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a dataset into VPTY files.
    Simulate(Overrides),
    /// Train a network on encoded data.
    Train(Overrides),
    /// Score a checkpoint on an encoded set and render montages.
    Eval(Overrides),
    /// Evaluate noiselessly trained nets over a list of PSNR levels.
    SweepNoise(Overrides),
    /// Measure inference throughput.
    Bench(Overrides),
    /// Convert a CSV of 784-value rows into an IDX3 file.
    Convert {
        csv: PathBuf,
        /// Target IDX path; defaults to `<out>/<stem>-idx3-ubyte`.
        idx: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct Overrides {
    /// `key=value` settings applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(cli: &Cli, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &overrides.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::ConfigKey(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if cli.print_defaults {
        write!(out, "{}", RunConfig::default().render())?;
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::ConfigKey("no command given; see --help".into()));
    };
    let ctx = |o: &Overrides| -> Result<Context> { Context::new(resolve(&cli, o)?, &cli.out) };
    match command {
        Command::Simulate(o) => commands::simulate(&ctx(o)?, &mut out).map(drop),
        Command::Train(o) => commands::train(&ctx(o)?, &mut out).map(drop),
        Command::Eval(o) => commands::eval(&ctx(o)?, &mut out).map(drop),
        Command::SweepNoise(o) => commands::sweep_noise(&ctx(o)?, &mut out).map(drop),
        Command::Bench(o) => commands::bench(&ctx(o)?, &mut out).map(drop),
        Command::Convert { csv, idx } => {
            let target = idx.clone().unwrap_or_else(|| commands::idx_path_for(csv, &cli.out));
            commands::convert(csv, &target, &mut out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
