use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "msa",
    version,
    about = "Successive-approximation solver for stochastic recursive control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the iteration and write the convergence trace as CSV.
    Run(RunArgs),
    /// Solve the binomial-tree problem exactly by enumerating policies.
    Oracle(OracleArgs),
    /// Write the optimality gap `J(u^{m-1}) - J*` and `m * gap` of a quadratic run.
    Rate(RateArgs),
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key-value (TOML) file with any of the flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// example41, lq, linear-recursive, or the path of a problem spec file.
    #[arg(long)]
    pub problem: Option<String>,
    /// Lipschitz parameter of example41.
    #[arg(long = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Stop once the cost decrease falls below this value.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total degree of the regression basis.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fill `wall_ms` with measured times instead of zeros.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Every adapted policy on the binary tree.
    Full,
    /// One control per lattice node.
    Recombining,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: Option<OracleMode>,
    /// Largest number of policies the oracle may evaluate.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Optimal cost; defaults to the analytic value 0 of the built-in quadratic problem.
    #[arg(long)]
    pub jstar: Option<f64>,
    /// First iteration included in the summary maximum.
    #[arg(long)]
    pub m0: Option<usize>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub rho: Option<f64>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub iters: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub degree: Option<usize>,
    pub out: Option<PathBuf>,
    pub timing: Option<bool>,
    pub mode: Option<OracleMode>,
    pub budget: Option<f64>,
    pub jstar: Option<f64>,
    pub m0: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(out) = &cfg.out {
            cfg.out = Some(base.join(out));
        }
        if let Some(problem) = &cfg.problem {
            if ProblemSelector::parse(problem).is_custom() {
                cfg.problem = Some(base.join(problem).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSelector {
    Example41,
    Lq,
    LinearRecursive,
    Custom(PathBuf),
}

impl ProblemSelector {
    pub fn parse(s: &str) -> Self {
        match s {
            "example41" => ProblemSelector::Example41,
            "lq" => ProblemSelector::Lq,
            "linear-recursive" => ProblemSelector::LinearRecursive,
            other => ProblemSelector::Custom(PathBuf::from(other)),
        }
    }

    fn is_custom(&self) -> bool {
        matches!(self, ProblemSelector::Custom(_))
    }
}

/// Settings after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSelector,
    pub l: f64,
    pub rho: Option<f64>,
    pub paths: usize,
    pub steps: usize,
    pub iters: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub degree: usize,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

pub const DEFAULT_L: f64 = 0.1;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_ORACLE_STEPS: usize = 3;
pub const DEFAULT_ITERS: usize = 30;
pub const DEFAULT_DEGREE: usize = 2;

impl RunConfig {
    pub fn resolve(
        flags: &CommonArgs,
        default_steps: usize,
    ) -> Result<(Self, FileConfig), CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let problem = flags.problem.clone().or_else(|| file.problem.clone());
        let cfg = RunConfig {
            problem: ProblemSelector::parse(problem.as_deref().unwrap_or("example41")),
            l: flags.l.or(file.l).unwrap_or(DEFAULT_L),
            rho: flags.rho.or(file.rho),
            paths: flags.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
            steps: flags.steps.or(file.steps).unwrap_or(default_steps),
            iters: flags.iters.or(file.iters).unwrap_or(DEFAULT_ITERS),
            epsilon: flags.epsilon.or(file.epsilon),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            degree: flags.degree.or(file.degree).unwrap_or(DEFAULT_DEGREE),
            out: flags.out.clone().or_else(|| file.out.clone()),
            timing: file.timing.unwrap_or(false),
        };
        Ok((cfg, file))
    }
}
