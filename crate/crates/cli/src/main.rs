use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irdm_cli::config::{RunConfig, ScenarioName, SimulateOptions, Stage, ALL_STAGES};
use irdm_cli::{pipeline, simulate, CliError};

#[derive(Parser)]
#[command(
    name = "irdm",
    version,
    about = "Institutional-state volatility models with network spillovers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated market codes.
    #[arg(long, value_delimiter = ',')]
    markets: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic input bundle and a config for it.
    Simulate {
        #[arg(long, default_value = "sim")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "demo")]
        scenario: Scenario,
        #[arg(long, default_value_t = 4)]
        n_markets: usize,
        #[arg(long, default_value_t = 2000)]
        t: usize,
    },
    Ingest(Common),
    FitBaseline(Common),
    /// Shock series and the MIDAS institutional index.
    BuildIndex(Common),
    FitIrdm(Common),
    Networks(Common),
    FitNirdm(Common),
    Panel(Common),
    Evaluate(Common),
    Robustness(Common),
    /// Run the stages listed in the config (all by default).
    Run(Common),
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Scenario {
    Demo,
    IrdmCalibrated,
    NirdmCalibrated,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.markets {
        cfg.markets = m.clone();
    }
    Ok(cfg)
}

fn run_target(common: &Common, target: Option<Stage>) -> Result<(), CliError> {
    let cfg = load(common)?;
    let stages = match target {
        Some(st) => st.closure(),
        None if cfg.stages.is_empty() => ALL_STAGES.to_vec(),
        None => cfg.stages.clone(),
    };
    let manifest = pipeline::run(&cfg, &stages)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} files to {}",
        manifest.outputs.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            out,
            seed,
            scenario,
            n_markets,
            t,
        } => {
            let scenario = match scenario {
                Scenario::Demo => ScenarioName::Demo,
                Scenario::IrdmCalibrated => ScenarioName::IrdmCalibrated,
                Scenario::NirdmCalibrated => ScenarioName::NirdmCalibrated,
            };
            let opts = SimulateOptions {
                scenario,
                n_markets,
                t,
            };
            simulate::write_bundle(&opts, seed, &out)?;
            println!(
                "wrote synthetic bundle and config.toml to {}",
                out.display()
            );
            Ok(())
        }
        Command::Ingest(c) => run_target(&c, Some(Stage::Ingest)),
        Command::FitBaseline(c) => run_target(&c, Some(Stage::Baseline)),
        Command::BuildIndex(c) => run_target(&c, Some(Stage::Shocks)),
        Command::FitIrdm(c) => run_target(&c, Some(Stage::Irdm)),
        Command::Networks(c) => run_target(&c, Some(Stage::Networks)),
        Command::FitNirdm(c) => run_target(&c, Some(Stage::Nirdm)),
        Command::Panel(c) => run_target(&c, Some(Stage::Panel)),
        Command::Evaluate(c) => run_target(&c, Some(Stage::Evaluate)),
        Command::Robustness(c) => run_target(&c, Some(Stage::Robustness)),
        Command::Run(c) => run_target(&c, None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
