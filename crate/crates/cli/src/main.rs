use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfin_cli::commands::{self, Context};
use mfin_cli::config::RunConfig;
use mfin_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "mfin", version, about = "Multi-factor crypto strategy backtests and MFIN training")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Raw CSVs, a written panel, or a previous run directory.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align raw CSVs into a panel directory.
    Ingest,
    /// Ex-post top-two selections on the whole test period (not tradable).
    Explore {
        #[arg(long)]
        svg: bool,
    },
    /// Walk-forward rule-based strategies, Long-only and CMB.
    Backtest {
        #[arg(long)]
        svg: bool,
    },
    /// Walk-forward MFIN: search, seed ensemble, out-of-sample book.
    TrainMfin {
        #[arg(long)]
        svg: bool,
    },
    /// Net Sharpe over the configured cost grid for saved series.
    CostSweep,
    /// Metrics, correlations and equity curves for saved series.
    Report {
        #[arg(long)]
        svg: bool,
    },
    /// Trainable parameters over the hyperparameter sweeps.
    ParamCount {
        #[arg(long, default_value_t = 22)]
        n_inputs: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,7,20,50")]
        assets: Vec<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let svg = matches!(cli.command, Command::Explore { svg: true } | Command::Backtest { svg: true } | Command::TrainMfin { svg: true } | Command::Report { svg: true });
    let ctx = Context { config, data_dir: cli.data_dir, out_dir: cli.out_dir, svg };
    match cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Explore { .. } => commands::explore(&ctx),
        Command::Backtest { .. } => commands::backtest(&ctx),
        Command::TrainMfin { .. } => commands::train_mfin(&ctx),
        Command::CostSweep => commands::cost_sweep_cmd(&ctx),
        Command::Report { .. } => commands::report(&ctx),
        Command::ParamCount { n_inputs, assets } => {
            if n_inputs == 0 || assets.contains(&0) {
                return Err(CliError::Config("counts must be positive".into()));
            }
            print!("{}", commands::param_count_table(n_inputs, &assets));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
