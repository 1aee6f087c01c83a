//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use npt_core::criteria::{enumerate_specs, named_catalog};

use npt_search::config::SweepConfig;
use npt_search::pipeline::{
    self, run_montecarlo, run_pipeline, step1_filter, step2_evaluate, SweepContext,
};
use npt_search::report::{self, OutputFormat, TableSet};
use npt_search::CliError;

#[derive(Parser)]
#[command(
    name = "npt-search",
    version,
    about = "Finds the most confident moment-matrix entanglement criterion \
             for a two-mode state under loss and a finite measurement budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the catalog of named criteria.
    Catalog,
    /// List every criterion spec within the configured search bounds.
    Enumerate(ConfigArgs),
    /// Step 1: keep criteria negative somewhere on the ideal sweep.
    Filter(ConfigArgs),
    /// Steps 1-2: evaluate survivors over the noise and budget grids.
    Evaluate(RunArgs),
    /// Steps 1-3: rank survivors per grid point.
    Rank(RunArgs),
    /// Full pipeline: results, allocations, ranking and manifest.
    Sweep(RunArgs),
    /// Simulate repeated finite-budget experiments for one criterion.
    Montecarlo(MonteCarloArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Sweep configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Sweep configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master randomness seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Table format; the manifest is always JSON.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of simulated experiments, overriding the config.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Catalog => {
            for entry in named_catalog() {
                println!("{}\t{}", entry.name, entry.spec);
            }
            Ok(())
        }
        Command::Enumerate(args) => {
            let config = SweepConfig::load(&args.config)?;
            let specs =
                enumerate_specs(config.d_min(), config.search.d_max, config.search.n_max)?;
            for spec in &specs {
                println!("{}\t{}", spec, pipeline::label_of(spec));
            }
            eprintln!("{} specs", specs.len());
            Ok(())
        }
        Command::Filter(args) => {
            let config = SweepConfig::load(&args.config)?;
            let family = config.resolve_family()?;
            let context = SweepContext::new(
                family.as_ref(),
                config.sweep_values()?,
                config.search.n_max,
                config.options.tail_tolerance,
                config.options.dims,
            )?;
            let survivors =
                step1_filter(&context, config.d_min(), config.search.d_max, config.search.n_max)?;
            for spec in &survivors {
                println!("{}\t{}", spec, pipeline::label_of(spec));
            }
            eprintln!("{} survivors", survivors.len());
            Ok(())
        }
        Command::Evaluate(args) => with_pool(&args, |config, seed, threads| {
            let started = Instant::now();
            let output = evaluated_output(config)?;
            let files = report::write_sweep(
                &args.out,
                args.format.into(),
                TableSet::Results,
                config,
                &output,
                seed,
                threads,
                started.elapsed(),
            )?;
            announce(&files);
            Ok(())
        }),
        Command::Rank(args) => with_pool(&args, |config, seed, threads| {
            let started = Instant::now();
            let output = run_pipeline(config)?;
            let files = report::write_sweep(
                &args.out,
                args.format.into(),
                TableSet::Ranked,
                config,
                &output,
                seed,
                threads,
                started.elapsed(),
            )?;
            announce(&files);
            Ok(())
        }),
        Command::Sweep(args) => with_pool(&args, |config, seed, threads| {
            let started = Instant::now();
            let output = run_pipeline(config)?;
            let files = report::write_sweep(
                &args.out,
                args.format.into(),
                TableSet::Full,
                config,
                &output,
                seed,
                threads,
                started.elapsed(),
            )?;
            announce(&files);
            Ok(())
        }),
        Command::Montecarlo(args) => with_pool(&args.run, |config, seed, _threads| {
            let output = run_montecarlo(config, seed, args.trials)?;
            let files = report::write_montecarlo(&args.run.out, &output)?;
            println!(
                "{}: predicted det {} with delta_det {} over {} trials",
                output.criterion,
                output.det,
                output.delta_det,
                output.trials.len()
            );
            announce(&files);
            Ok(())
        }),
    }
}

/// Steps 1-2 only: the ranking table stays empty.
fn evaluated_output(config: &SweepConfig) -> Result<pipeline::SweepOutput, CliError> {
    let family = config.resolve_family()?;
    let context = SweepContext::new(
        family.as_ref(),
        config.sweep_values()?,
        config.search.n_max,
        config.options.tail_tolerance,
        config.options.dims,
    )?;
    let survivors =
        step1_filter(&context, config.d_min(), config.search.d_max, config.search.n_max)?;
    let etas = config.eta_values()?;
    let n_bars = config.n_bar_values()?;
    let m_tots = config.m_tot_values()?;
    let evaluations = step2_evaluate(
        &context,
        &survivors,
        &etas,
        &n_bars,
        &m_tots,
        config.options.confidence_threshold,
    )?;
    Ok(pipeline::SweepOutput { context, survivors, evaluations, ranked: Vec::new() })
}

/// Loads the config, applies the seed override, and runs the body inside
/// a dedicated thread pool when --threads is given.
fn with_pool(
    args: &RunArgs,
    body: impl FnOnce(&SweepConfig, u64, Option<usize>) -> Result<(), CliError> + Send,
) -> Result<(), CliError> {
    let config = SweepConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.options.seed);
    match args.threads {
        None => body(&config, seed, None),
        Some(threads) => {
            if threads == 0 {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| body(&config, seed, Some(threads)))
        }
    }
}

fn announce(files: &[PathBuf]) {
    for path in files {
        println!("wrote {}", path.display());
    }
}
