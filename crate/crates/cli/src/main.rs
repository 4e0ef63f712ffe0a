mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error with an explicit exit status.
#[derive(Debug)]
pub struct Exit(pub u8, pub String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "pisim",
    version,
    about = "Private-inference cost models, protocol checks and serving simulation"
)]
pub struct Cli {
    /// Directory holding measured_costs.tsv, optimizations.tsv, archs/ and experiments/
    #[arg(long, global = true, env = "PISIM_CONFIG_DIR", value_name = "DIR")]
    pub config_dir: Option<PathBuf>,

    /// Worker threads for runs and sweep cells (0 = one per core)
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the per-inference cost report of a network and protocol
    Cost(CostArgs),
    /// Simulate request serving for one configuration
    Simulate(SimulateArgs),
    /// Simulate every (protocol, capacity, rate) cell and write long-format results
    Sweep(SweepArgs),
    /// Run private inference on random inputs and compare with plaintext inference
    Verify(VerifyArgs),
    /// Architecture file utilities
    Arch {
        #[command(subcommand)]
        command: ArchCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum ArchCommand {
    /// Parse architecture files and print their layer counts
    Check {
        /// `.arch` files; bare names resolve under <config-dir>/archs
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolChoice {
    Sg,
    Cg,
    Both,
}

impl ProtocolChoice {
    pub fn protocols(self) -> Vec<pisim::costmodel::Protocol> {
        use pisim::costmodel::Protocol::*;
        match self {
            ProtocolChoice::Sg => vec![ServerGarbler],
            ProtocolChoice::Cg => vec![ClientGarbler],
            ProtocolChoice::Both => vec![ServerGarbler, ClientGarbler],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct NetworkArgs {
    /// Preset network: resnet32, vgg16 or resnet18
    #[arg(long, default_value = "resnet32")]
    pub model: String,
    /// Dataset: cifar100 (c100), tiny (tinyimagenet) or imagenet
    #[arg(long, default_value = "cifar100")]
    pub dataset: String,
    /// Architecture file instead of a preset; bare names resolve under <config-dir>/archs
    #[arg(long, value_name = "FILE")]
    pub arch: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub protocol: ProtocolChoice,
    /// Preset name from optimizations.tsv or `relu=..,flop=..,gc=..,he=..`
    #[arg(long)]
    pub knobs: Option<String>,
    /// Bytes per second
    #[arg(long, default_value_t = pisim::costmodel::DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    /// table (measured rows) or scaled (fitted component rates)
    #[arg(long, default_value = "table")]
    pub cost_mode: String,
    /// Client storage used for the regime classification
    #[arg(long, default_value_t = 8.0, value_name = "GB")]
    pub client_capacity_gb: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct SpecArgs {
    /// Experiment spec; `@name.exp` resolves under <config-dir>/experiments
    pub spec: Option<String>,
    /// Override a spec key (repeatable, applied last, last one wins)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub arch: Option<String>,
    /// Seconds of simulated time per run
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bytes per second
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_name = "GB")]
    pub server_capacity_gb: Option<f64>,
    /// table or scaled
    #[arg(long)]
    pub cost_mode: Option<String>,
    /// Preset name from optimizations.tsv or `relu=..,flop=..,gc=..,he=..`
    #[arg(long)]
    pub knobs: Option<String>,
    /// preemptive or non-preemptive
    #[arg(long)]
    pub policy: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Comma-separated subset of csv,json
    #[arg(long)]
    pub format: Option<String>,
    /// Reduced-scale profile: 4 h horizon, 10 runs
    #[arg(long)]
    pub ci_profile: bool,
    /// Report infeasible configurations instead of failing with exit status 3
    #[arg(long)]
    pub allow_infeasible: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// sg or cg
    #[arg(long)]
    pub protocol: Option<String>,
    /// Requests per second
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_name = "GB")]
    pub client_capacity_gb: Option<f64>,
    /// Write the event trace of the first run as JSON lines
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Comma-separated, e.g. sg,cg
    #[arg(long)]
    pub protocols: Option<String>,
    /// Comma-separated requests per second
    #[arg(long)]
    pub rates: Option<String>,
    /// Comma-separated client capacities
    #[arg(long, value_name = "GB,..")]
    pub capacities_gb: Option<String>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub protocol: ProtocolChoice,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights are drawn uniformly from [-bound, bound]
    #[arg(long, default_value_t = 8)]
    pub weight_bound: i64,
    /// Inputs are drawn uniformly from [-bound, bound]
    #[arg(long, default_value_t = 8)]
    pub input_bound: u64,
    /// Largest ReLU count verified without --force
    #[arg(long, default_value_t = 10_000)]
    pub max_relus: u64,
    /// Verify networks above --max-relus
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_status(&e))
        }
    }
}
