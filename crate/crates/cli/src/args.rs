use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "glv-econ", version, about = "General Lotka-Volterra wealth and income models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one economy and write wealth, metrics and aggregate series.
    Simulate(SimulateArgs),
    /// Run a grid over profit ratio and consumption spread.
    Sweep(SweepArgs),
    /// Fit a distribution family to a histogram or a column of values.
    Fit(FitArgs),
    /// Inequality metrics of the columns of a CSV file.
    Metrics(MetricsArgs),
    /// Integrate the two-species Lotka-Volterra system.
    Lv(LvArgs),
    /// Run the stochastic city-size model.
    City(CityArgs),
}

// Flags of the config-backed commands are all optional here: a missing flag
// falls back to the config file, then to the built-in default.

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// 1a, 1b, 1c, 1d or custom.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Profit ratio ρ.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Explicit total income per iteration (required when ρ = 1).
    #[arg(long)]
    pub total_income: Option<f64>,
    /// Mean wage.
    #[arg(long)]
    pub wage: Option<f64>,
    /// Wage standard deviation; zero gives identical wages.
    #[arg(long)]
    pub wage_sd: Option<f64>,
    /// stochastic, per-agent or uniform.
    #[arg(long)]
    pub consumption: Option<String>,
    /// Mean consumption rate Ω.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Standard deviation of Ω.
    #[arg(long)]
    pub omega_sd: Option<f64>,
    /// compulsory-saving or none.
    #[arg(long)]
    pub policy: Option<String>,
    /// Wealth threshold as a fraction of mean wealth.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Fractional cut applied to the consumption rate below the threshold.
    #[arg(long)]
    pub cut: Option<f64>,
    /// Hill tail size (default 4% of the agents).
    #[arg(long)]
    pub n_tail: Option<usize>,
    /// Also write a final-wealth histogram with this many bins.
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base model whose parameters the grid varies.
    #[arg(long)]
    pub base: Option<String>,
    /// Profit ratios, as `start:stop:step` or a comma list.
    #[arg(long)]
    pub rho: Option<String>,
    /// Consumption spreads (sd over mean); defaults to the base model's.
    #[arg(long)]
    pub v: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub n_tail: Option<usize>,
    /// Table destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit the tail-exponent law to the table and write it as JSON.
    #[arg(long)]
    pub law: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// glv, lognormal, maxwell-boltzmann, pareto or all.
    #[arg(long, default_value = "glv")]
    pub family: String,
    /// `bin_lo,bin_hi,count` histogram, or any CSV holding raw values.
    #[arg(long)]
    pub input: PathBuf,
    /// Column of raw values to bin when the input is not a histogram.
    #[arg(long, default_value = "wealth")]
    pub column: String,
    /// Bins used for raw values.
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Relative error floor of the χ² weights.
    #[arg(long, default_value_t = glv_econ::distfit::DEFAULT_ASSUMED_ERROR)]
    pub assumed_error: f64,
    /// Objective evaluation budget per family.
    #[arg(long, default_value_t = glv_econ::distfit::MAX_EVALUATIONS)]
    pub max_evaluations: usize,
    /// JSON destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict to one column; default is every column except `rank`.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub n_tail: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LvArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prey growth rate.
    #[arg(long)]
    pub a: Option<f64>,
    /// Predator death rate.
    #[arg(long)]
    pub c: Option<f64>,
    /// Predation rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Predator conversion rate.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Keep every n-th state.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cities: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_sd: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub a_sd: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c_sd: Option<f64>,
    /// Steps between pooled snapshots in the second half.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Bins of the stationary histogram.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
