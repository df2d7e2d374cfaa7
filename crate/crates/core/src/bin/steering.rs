use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steering_core::harness::{
    bundle_name, compare_csv, oracle_table, read_bundle, run_experiment, write_bundle,
    ExperimentConfig,
};
use steering_core::Error;

#[derive(Parser)]
#[command(
    name = "steering",
    version,
    about = "Tabular Stein-directed exploration workbench"
)]
struct Cli {
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the episode budget.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Output directory (`run`) or output file (`compare`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment and write its CSVs and bundle.json.
    Run { config: PathBuf },
    /// Merge bundles into one regret table.
    Compare {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the exact optimal value table of the configured environment.
    Oracle { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    cfg.apply_overrides(cli.seed, cli.episodes, cli.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let dir = cfg.out_dir.clone().ok_or_else(|| Error::Config {
                field: "out_dir".into(),
                message: "set out_dir in the config or pass --out".into(),
            })?;
            let bundle = run_experiment(&cfg)?;
            for path in write_bundle(&bundle, &dir)? {
                println!("wrote {}", path.display());
            }
            for agg in &bundle.aggregates {
                let last = agg.mean_cumulative_regret.len() - 1;
                println!(
                    "{}: final cumulative regret {:.4} ± {:.4}",
                    agg.agent, agg.mean_cumulative_regret[last], agg.std_cumulative_regret[last]
                );
            }
        }
        Command::Compare { bundles } => {
            let mut loaded = Vec::with_capacity(bundles.len());
            for path in bundles {
                loaded.push((bundle_name(path)?, read_bundle(path)?));
            }
            let table = compare_csv(&loaded);
            match &cli.out {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
        }
        Command::Validate { config } => {
            let cfg = load(cli, config)?;
            println!(
                "ok: {} with {} agent(s) over {} seed(s)",
                cfg.env.name(),
                cfg.agents.len(),
                cfg.seeds.len()
            );
        }
        Command::Oracle { config } => {
            let cfg = load(cli, config)?;
            print!("{}", oracle_table(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
