use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lendpool::commands::{self, Format};
use lendpool::data::{load_series, GapPolicy, SeriesSchema};
use lendpool::scenario::ScenarioConfig;
use lendpool::Result;

#[derive(Parser)]
#[command(name = "lendpool", version, about = "Lending-pool rate controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Format {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `runs`.
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the aggregated report.
    Simulate(Common),
    /// Run a scenario once per value of a config axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted config path, e.g. `market.trajectory.sigma_trns`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Paired truthful/adversarial runs and the measured rate gap.
    Adversary(Common),
    /// Collateral-factor trajectory along a volatility path.
    Risk {
        #[command(flatten)]
        common: Common,
        /// CSV with a `sigma` column (and optional `mu`) instead of the
        /// simulated price path.
        #[arg(long)]
        sigma_csv: Option<PathBuf>,
    },
    /// Lag search and rolling fit on a pool history CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        rho: f64,
        #[arg(long, default_value_t = 30)]
        max_delta: usize,
        /// Slot length in seconds.
        #[arg(long, default_value_t = 10_800)]
        slot: i64,
        /// Fail on gaps instead of forward-filling.
        #[arg(long)]
        strict_gaps: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn load(common: &Common) -> Result<(ScenarioConfig, PathBuf)> {
    commands::set_threads(common.threads)?;
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = common.runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    let out = commands::resolve_out_dir(common.out_dir.clone(), &cfg);
    Ok((cfg, out))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let report = commands::cmd_simulate(&cfg, &out, c.format.into())?;
            for s in &report.summary {
                println!("{:<22} {:>14.6e} ± {:.2e}", s.metric, s.mean, s.stderr);
            }
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, out) = load(&common)?;
            let rows = commands::cmd_sweep(&cfg, &axis, &values, &out, common.format.into())?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Adversary(c) => {
            let (cfg, out) = load(&c)?;
            let report = commands::cmd_adversary(&cfg, &out, c.format.into())?;
            print_json(&serde_json::json!({
                "mean_gap": report.mean_gap,
                "mean_bound": report.mean_bound,
            }))?;
        }
        Command::Risk { common, sigma_csv } => {
            let (cfg, out) = load(&common)?;
            let rows = commands::cmd_risk(&cfg, sigma_csv.as_deref(), &out)?;
            println!("{} slots written to {}", rows.len(), out.join("risk.csv").display());
        }
        Command::Fit {
            data,
            rho,
            max_delta,
            slot,
            strict_gaps,
            out_dir,
            threads,
        } => {
            commands::set_threads(threads)?;
            let schema = SeriesSchema {
                slot_duration: slot,
                gaps: if strict_gaps {
                    GapPolicy::Error
                } else {
                    GapPolicy::ForwardFill
                },
            };
            let series = load_series(Path::new(&data), &schema)?;
            let out = commands::cmd_fit(&series, rho, max_delta, &out_dir)?;
            print_json(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
