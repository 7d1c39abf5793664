use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fedwind_cli::config::ENV_PREFIX;
use fedwind_cli::{compare, run_pipeline, CliError, Method, Overrides, RunConfig, Stage, Workspace};
use fedwind_core::forecast::RollingMode;

/// Federated behaviour clustering and per-cluster forecasting for wind
/// turbine fleets.
///
/// Settings come from the config file, then `FEDWIND_SEED`, `FEDWIND_METHOD`,
/// `FEDWIND_OUT` and `FEDWIND_MODE`, then the flags below (later wins).
#[derive(Debug, Parser)]
#[command(name = "fedwind", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, env = "FEDWIND_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rolling forecast mode: teacher_forced or recursive.
    #[arg(long, global = true)]
    mode: Option<RollingMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or ingest the fleet.
    Generate,
    /// Compute behaviour fingerprints.
    Features,
    /// Group turbines with the configured method.
    Cluster,
    /// Train one forecaster per group.
    Train,
    /// Rolling 24 h forecasts on the test period.
    Forecast,
    /// Score the trained models.
    Evaluate,
    /// All stages in order.
    Run,
    /// Run several methods on one fleet and collect their scores.
    Compare {
        #[arg(long, value_delimiter = ',', default_values_t = Method::ALL.to_vec())]
        methods: Vec<Method>,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = Overrides {
        seed: cli.seed,
        method: cli.method,
        out: cli.out.clone(),
        mode: cli.mode,
    };
    let overrides = Overrides::from_env().with_context(|| format!("reading {ENV_PREFIX}* variables"))?;
    Ok(file.apply(&overrides.then(flags)).resolve()?)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = load(&cli)?;
    let ws = Workspace::new(&cfg.out);
    let stage = match &cli.command {
        Command::Generate => Stage::Generate,
        Command::Features => Stage::Features,
        Command::Cluster => Stage::Cluster,
        Command::Train => Stage::Train,
        Command::Forecast => Stage::Forecast,
        Command::Evaluate => Stage::Evaluate,
        Command::Run => {
            let m = run_pipeline(&cfg, &ws)?;
            println!("{}: {} files, manifest {}", cfg.out.display(), m.files.len(), m.digest());
            return Ok(());
        }
        Command::Compare { methods } => {
            for r in compare(&cfg, methods)? {
                println!("{:<14} {:>3} {:<16} mse {:.6} r2 {:.4}", r.method, r.n_groups, r.split, r.metrics.mse, r.metrics.r2);
            }
            return Ok(());
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
    };
    let m = stage.run(&cfg, &ws)?;
    println!("{}: {} done, manifest {}", cfg.out.display(), stage.name(), m.digest());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CliError>() {
                Some(CliError::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
