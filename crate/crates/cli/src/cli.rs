use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use gridvolt::der::CapabilityMode;
use gridvolt::opf::VsMode;
use std::path::PathBuf;

/// Distribution-grid OPF with transmission voltage-support participation.
#[derive(Debug, Parser)]
#[command(name = "gridvolt", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Radial power flow for one set of injections.
    Pf(PfArgs),
    /// Iterative OPF for one day.
    Opf(OpfArgs),
    /// Every day of a scenario's date range.
    Simulate(SimulateArgs),
    /// Monthly active-scheme settlement of metered intervals.
    Settle(SettleArgs),
    /// Regenerates the report of a run directory after an integrity check.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PfArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// CSV with `bus,p_mw,q_mvar` (generation positive); defaults to the
    /// network's peak loads.
    #[arg(long)]
    pub injections: Option<PathBuf>,
    /// OLTC tap position; defaults to the network's nominal tap.
    #[arg(long, allow_negative_numbers = true)]
    pub tap: Option<i32>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Scenario inputs; flags override the scenario file.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub fleet: Option<PathBuf>,
    /// Profile CSV; synthetic profiles are generated when absent.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Tariff preset name, tariff file or `file#preset`.
    #[arg(long)]
    pub tariff: Option<String>,
    #[arg(long, value_parser = parse_vs_mode)]
    pub vs_mode: Option<VsMode>,
    #[arg(long, value_parser = parse_capability)]
    pub capability: Option<CapabilityMode>,
    /// Relative MIP gap.
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub big_m: Option<f64>,
    /// Seed of the synthetic profiles.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OpfArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Day to solve; defaults to the first day of the scenario.
    #[arg(long)]
    pub day: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    /// Worker threads for day solves (0: one per core).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Runs the unaware reference and the active scheme under every
    /// capability mode instead of the configured scheme.
    #[arg(long)]
    pub compare_capabilities: bool,
}

#[derive(Debug, Args)]
pub struct SettleArgs {
    /// CSV with `timestamp,E_P_MWh,E_Q_Mvarh,Vm_pu,Vset_pu`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value = "preset-2018")]
    pub tariff: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by `opf` or `simulate`.
    #[arg(long)]
    pub run: PathBuf,
}

fn parse_vs_mode(s: &str) -> Result<VsMode, String> {
    s.parse()
}

fn parse_capability(s: &str) -> Result<CapabilityMode, String> {
    s.parse()
}
