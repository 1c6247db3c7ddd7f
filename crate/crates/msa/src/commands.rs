use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use msa_core::benchmarks::{tree_bruteforce, TreeMode, TreeSolution, DEFAULT_POLICY_BUDGET};
use msa_core::bsde::{Backend, RegressionBackend};
use msa_core::{run_msa, Clock, InitialControl, IterationRecord, MsaConfig, NoClock};

use crate::config::{
    Command, FileConfig, OracleArgs, OracleMode, RateArgs, RunArgs, RunConfig,
    DEFAULT_ORACLE_STEPS, DEFAULT_STEPS,
};
use crate::problems::{load, Family, Loaded};
use crate::trace::{fmt_g17, write_rate, write_trace, RateRow, TraceRow};
use crate::CliError;

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Rate(args) => cmd_rate(&args),
    }
}

/// Opens the output before any computation, so a bad path fails fast.
fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| {
                CliError::Config(format!("cannot open output {}: {e}", p.display()))
            })?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

pub fn msa_config(cfg: &RunConfig, loaded: &Loaded) -> Result<MsaConfig, CliError> {
    let config = MsaConfig {
        rho: cfg.rho.unwrap_or(loaded.rho),
        epsilon: cfg.epsilon,
        max_iters: cfg.iters,
        n_paths: cfg.paths,
        steps: cfg.steps,
        seed: cfg.seed,
        backend: Backend::Regression(RegressionBackend {
            degree: cfg.degree,
            ..RegressionBackend::default()
        }),
        ..MsaConfig::default()
    };
    config.validate()?;
    Ok(config)
}

pub fn solve(cfg: &RunConfig, loaded: &Loaded) -> Result<Vec<IterationRecord>, CliError> {
    let config = msa_config(cfg, loaded)?;
    let started = WallClock(Instant::now());
    let clock: &dyn Clock = if cfg.timing { &started } else { &NoClock };
    let result = run_msa(
        loaded.problem.as_ref(),
        &loaded.domain,
        &config,
        InitialControl::Random,
        clock,
    )?;
    Ok(result.records)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (mut cfg, _) = RunConfig::resolve(&args.common, DEFAULT_STEPS)?;
    cfg.timing |= args.timing;
    let loaded = load(&cfg.problem, cfg.l)?;
    let out = open_output(cfg.out.as_deref())?;
    let records = solve(&cfg, &loaded)?;
    let rows: Vec<TraceRow> = records.iter().map(TraceRow::from).collect();
    write_trace(out, &rows)
}

fn solve_tree(
    args: &OracleArgs,
    cfg: &RunConfig,
    file: &FileConfig,
) -> Result<TreeSolution, CliError> {
    let loaded = load(&cfg.problem, cfg.l)?;
    let mode = match args.mode.or(file.mode).unwrap_or(OracleMode::Full) {
        OracleMode::Full => TreeMode::NonRecombining,
        OracleMode::Recombining => TreeMode::Recombining,
    };
    let budget = args.budget.or(file.budget).unwrap_or(DEFAULT_POLICY_BUDGET);
    Ok(tree_bruteforce(
        loaded.problem.as_ref(),
        &loaded.domain,
        cfg.steps,
        mode,
        budget,
    )?)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let (cfg, file) = RunConfig::resolve(&args.common, DEFAULT_ORACLE_STEPS)?;
    let mut out = open_output(cfg.out.as_deref())?;
    let solution = solve_tree(args, &cfg, &file)?;
    write_policy(&mut out, &solution)
        .map_err(|e| CliError::Config(format!("cannot write output: {e}")))
}

fn write_policy(out: &mut dyn Write, solution: &TreeSolution) -> io::Result<()> {
    writeln!(out, "Jstar={}", fmt_g17(solution.jstar))?;
    writeln!(out, "evaluated={}", solution.evaluated)?;
    let label = match solution.mode {
        TreeMode::NonRecombining => "node",
        TreeMode::Recombining => "ups",
    };
    writeln!(out, "j,{label},u")?;
    for (j, node, u) in solution.table() {
        let u: Vec<String> = u.iter().map(|v| fmt_g17(*v)).collect();
        writeln!(out, "{j},{node},{}", u.join(";"))?;
    }
    out.flush()
}

/// Gap rows and the summary `(m0, C1, max over m >= m0 of m * gap)`.
pub fn rate_rows(
    records: &[IterationRecord],
    jstar: f64,
    m0: usize,
) -> (Vec<RateRow>, f64, Option<f64>) {
    let rows: Vec<RateRow> = records
        .iter()
        .map(|r| {
            let gap = r.cost.mean - jstar;
            RateRow {
                iter: r.m,
                gap,
                iter_times_gap: r.m as f64 * gap,
            }
        })
        .collect();
    let c1 = rows
        .iter()
        .find(|r| r.iter == m0)
        .map_or(1.0, |r| r.gap.max(1.0));
    let max = rows
        .iter()
        .filter(|r| r.iter >= m0)
        .map(|r| r.iter_times_gap)
        .reduce(f64::max);
    (rows, c1, max)
}

pub fn cmd_rate(args: &RateArgs) -> Result<(), CliError> {
    let (cfg, file) = RunConfig::resolve(&args.common, DEFAULT_STEPS)?;
    let m0 = args.m0.or(file.m0).unwrap_or(1);
    if m0 == 0 {
        return Err(CliError::Config("m0 must be at least 1".into()));
    }
    let loaded = load(&cfg.problem, cfg.l)?;
    if loaded.family != Family::Lq {
        return Err(CliError::Config("rate needs a quadratic problem".into()));
    }
    let jstar = args
        .jstar
        .or(file.jstar)
        .or(loaded.jstar)
        .ok_or_else(|| CliError::Config("no known optimal cost; pass --jstar".into()))?;
    let out = open_output(cfg.out.as_deref())?;
    let records = solve(&cfg, &loaded)?;
    let (rows, c1, max) = rate_rows(&records, jstar, m0);
    write_rate(out, &rows)?;
    let summary = match max {
        Some(max) => format!(
            "max_iter_times_gap={} m0={m0} C1={} bounded={}",
            fmt_g17(max),
            fmt_g17(c1),
            max <= c1
        ),
        None => format!("max_iter_times_gap=none m0={m0} C1={}", fmt_g17(c1)),
    };
    if cfg.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}
