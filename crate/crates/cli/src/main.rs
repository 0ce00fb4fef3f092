use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvqkd::par::Execution;
use cvqkd_cli::{commands, config, out_dir, CliError, Context};

/// Simulate a CV-QKD link and write CSV/JSON results.
#[derive(Parser)]
#[command(name = "cvqkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a JSON run record whose embedded config is reused.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set channel.distance_km=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory [env: CVQKD_OUT_DIR, default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run on one thread. Results are identical either way.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Shot-noise and electronic-noise calibration from LO and dark captures.
    Calibrate(Common),
    /// Full link simulation, parameter estimation and key rate.
    Run(Common),
    /// Key rate against distance for each configured block length.
    Sweep(Common),
    /// Per-frame excess-noise estimates and their running mean.
    NoiseTimeseries {
        #[command(flatten)]
        common: Common,
        /// Number of frames; defaults to `frames` from the config.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Frame-error rate of the configured LDPC code over an SNR sweep.
    ReconFer(Common),
    /// Print the resolved configuration as TOML.
    Config(Common),
    /// Generate a staircase IRA parity-check matrix in alist format.
    GenCode {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        rate: f64,
        /// Column weight of the information bits.
        #[arg(long, default_value_t = 5)]
        degree: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn context(c: &Common) -> Result<Context, CliError> {
    Ok(Context {
        config: config::load(c.config.as_deref(), &c.overrides)?,
        out_dir: out_dir(c.out_dir.clone()),
        exec: if c.serial { Execution::Serial } else { Execution::Parallel },
    })
}

fn dispatch(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Calibrate(c) => commands::calibrate(&context(&c)?),
        Command::Run(c) => commands::run(&context(&c)?),
        Command::Sweep(c) => commands::sweep(&context(&c)?),
        Command::NoiseTimeseries { common, frames } => commands::noise_timeseries(&context(&common)?, frames),
        Command::ReconFer(c) => commands::recon_fer(&context(&c)?),
        Command::Config(c) => {
            print!("{}", config::to_toml(&context(&c)?.config));
            Ok(Vec::new())
        }
        Command::GenCode { n, rate, degree, seed, out } => {
            commands::gen_code(n, rate, degree, seed, &out).map(|p| vec![p])
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
