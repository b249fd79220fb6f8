use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "netadjust",
    version,
    about = "Net survival with life tables adjusted for cancer patients and cancer deaths"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pohar-Perme, Ederer I and crude probability of death for a registry.
    Estimate(EstimateArgs),
    /// Export the adjusted population survival and its diagnostics.
    Adjust(AdjustArgs),
    /// Run the birth-cohort simulation study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Use the life table as population survival.
    Naive,
    /// Use the life table adjusted for cancer patients and cancer deaths.
    Adjusted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Adjusted => "adjusted",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Registry CSV: age_diag,year_diag,sex,time,event.
    #[arg(long)]
    pub registry: PathBuf,
    /// Life-table CSV: age,year,sex,q.
    #[arg(long)]
    pub lifetable: PathBuf,
    /// Incidence CSV: age,year,sex,ir.
    #[arg(long, conflicts_with_all = ["population", "diagnoses"])]
    pub incidence: Option<PathBuf>,
    /// Cancer-free person-years CSV: age,year,sex,person_years.
    #[arg(long, requires = "diagnoses")]
    pub population: Option<PathBuf>,
    /// New-diagnosis counts CSV: age,year,sex,count.
    #[arg(long, requires = "population")]
    pub diagnoses: Option<PathBuf>,
}

impl Inputs {
    pub fn has_incidence(&self) -> bool {
        self.incidence.is_some() || self.population.is_some()
    }
}

#[derive(Debug, Clone, Args)]
pub struct Solver {
    /// Last follow-up year of the adjusted population survival.
    #[arg(long, default_value_t = 15)]
    pub horizon: usize,
    /// Number of anchor points for the overall-survival tail.
    #[arg(long = "extrapolation-points", default_value_t = 4)]
    pub extrapolation_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum, default_value_t = Mode::Naive)]
    pub mode: Mode,
    #[command(flatten)]
    pub solver: Solver,
    /// Report years, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    pub years: Vec<u32>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub solver: Solver,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario file; flags override its values.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Dataset 1 to 4.
    #[arg(long)]
    pub dataset: Option<u8>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "cohort-size")]
    pub cohort_size: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Anchor-point counts to compare, comma-separated.
    #[arg(long = "extrapolation-points", value_delimiter = ',')]
    pub extrapolation_points: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub years: Option<Vec<u32>>,
    /// Worker threads for replicates; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write the first replicate's registry and tables as input CSVs.
    #[arg(long)]
    pub export: bool,
    #[arg(long)]
    pub out: PathBuf,
}
