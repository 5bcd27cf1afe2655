use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftsc_cli::{
    cmd_acs, cmd_campaign, cmd_lvs_bench, cmd_scaling, cmd_solve, parse_list, CliError, Overrides,
    ScalingConfig, EXIT_ERROR, ORACLE_MAX_SIZE,
};
use ftsc_core::lvs::BenchConfig;

#[derive(Parser)]
#[command(name = "ftsc", version, about = "Fault-tolerant flight software simulation suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one guidance instance. Exit 0 converged, 2 iteration limit, 3 diverged.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Solution JSON; the runtime record and manifest go beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a bit-flip fault campaign on the guidance solver.
    Campaign {
        /// Campaign JSON; defaults to the vertical reference instance.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the replicated attitude-control simulation.
    Acs {
        /// ACS JSON; defaults to the demo scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Time the correlation kernels.
    LvsBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated image edges, e.g. 128,256.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// Add oracle comparison rows for sizes up to 16.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Median solve time over a ladder of node counts.
    Scaling {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated node counts, e.g. 10,40,110,220.
        #[arg(long)]
        ladder: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.clone(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve { config, out } => cmd_solve(&config, &out),
        Command::Campaign {
            config,
            out,
            seed,
            trials,
        } => cmd_campaign(config.as_deref(), &out, &Overrides { seed: seed.seed, trials }),
        Command::Acs { config, out, seed } => cmd_acs(config.as_deref(), &out, seed.seed),
        Command::LvsBench {
            config,
            out,
            sizes,
            reps,
            oracle,
            seed,
        } => {
            let mut cfg: BenchConfig = load(config.as_ref())?;
            if let Some(s) = sizes {
                cfg.sizes = parse_list(&s)?;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if oracle {
                cfg.oracle_max = ORACLE_MAX_SIZE;
            }
            if let Some(s) = seed.seed {
                cfg.seed = s;
            }
            cmd_lvs_bench(&cfg, &out)
        }
        Command::Scaling {
            config,
            out,
            ladder,
            reps,
        } => {
            let mut cfg: ScalingConfig = load(config.as_ref())?;
            if let Some(l) = ladder {
                cfg.ladder = parse_list(&l)?;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            cmd_scaling(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("ftsc: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
