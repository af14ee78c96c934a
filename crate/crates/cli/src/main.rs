//! `troppo`: propagation mechanism analysis and packet statistics for LoRa
//! links.
//!
//! Exit codes: 0 success, 1 analysis failure, 2 usage or input error,
//! 3 environment error (lock held, network, filesystem).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use config::{Config, FileConfig, Overrides};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Analysis(String),
    Environment(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Analysis(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Environment(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Analysis(m) | CliError::Environment(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "troppo", version, about = "LoRa tropospheric propagation analysis")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Packet store directory.
    #[arg(long, global = true, value_name = "DIR")]
    store: Option<PathBuf>,
    #[arg(long, global = true, value_name = "KM")]
    earth_radius_km: Option<f64>,
    /// Height above the surface searched for the dominant gradient.
    #[arg(long, global = true, value_name = "M")]
    ceiling_m: Option<f64>,
    /// Sensitivity override file (`sf = dbm` per line).
    #[arg(long, global = true, value_name = "PATH")]
    sensitivity: Option<PathBuf>,
    #[arg(long, global = true, value_name = "URL")]
    elevation_url: Option<String>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refractivity and gradient profile of a sounding.
    Refract(RefractArgs),
    /// Decide which mechanism explains a node-to-gateway link.
    Link(LinkArgs),
    /// Add packet metadata to the store.
    Ingest(IngestArgs),
    /// Packet statistics from the store.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct RefractArgs {
    /// Wyoming-format sounding text.
    pub sounding: PathBuf,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum KnifeEdge {
    Printed,
    ItuP526,
}

#[derive(Args)]
pub struct LinkArgs {
    #[arg(long)]
    pub node: String,
    #[arg(long)]
    pub gateway: String,
    /// Terrain profile CSV from node to gateway.
    #[arg(long, conflicts_with = "fetch", required_unless_present = "fetch")]
    pub profile: Option<PathBuf>,
    /// Fetch the profile from the elevation service.
    #[arg(long)]
    pub fetch: bool,
    /// Samples along the path when fetching.
    #[arg(long, default_value_t = 201, requires = "fetch")]
    pub samples: usize,
    /// Save the fetched profile as CSV.
    #[arg(long, requires = "fetch")]
    pub save_profile: Option<PathBuf>,
    #[arg(long)]
    pub sounding: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub sf: u8,
    /// Registry JSON (defaults to the store's registry).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "printed")]
    pub knife_edge: KnifeEdge,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Exit 1 when the link is unexplained.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Canonical,
    #[value(name = "ttn_v3", alias = "ttn-v3")]
    TtnV3,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Newline-delimited JSON input.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    pub format: Format,
    /// Validate this registry and store it alongside the packets.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Metric {
    Daily,
    Sf,
    Series,
    Summary,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub gateway: Option<String>,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// `all` or a number of days (`1d`, `10d`, `30d`) back from the newest
    /// matching record.
    #[arg(long, default_value = "all")]
    pub window: String,
    #[arg(long, conflicts_with = "svg")]
    pub csv: bool,
    #[arg(long)]
    pub svg: bool,
    /// Registry JSON for summary distances (defaults to the store's).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        earth_radius_km: cli.earth_radius_km,
        gradient_ceiling_m: cli.ceiling_m,
        sensitivity_table: cli.sensitivity,
        elevation_url: cli.elevation_url,
        store: cli.store,
    };
    let cfg = Config::resolve(flags, file, &|k| std::env::var(k).ok())?;
    match cli.command {
        Command::Refract(a) => commands::refract(&cfg, &a),
        Command::Link(a) => commands::link(&cfg, &a),
        Command::Ingest(a) => commands::ingest(&cfg, &a),
        Command::Stats(a) => commands::stats(&cfg, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_env("TROPPO_LOG").init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("troppo: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
