use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use walras_core::io::{parse_economy, write_trajectory, ConfigEcho, SummaryReport};
use walras_core::model::{check_recourse, Economy, Stage};
use walras_core::solver::{multistart_solve, solve, SolverConfig, Start, Status};
use walras_core::walrasian::Augmenting;
use walras_core::Error;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;

#[derive(Parser)]
#[command(name = "walras", version, about = "Compute Walras equilibrium prices of exchange and two-stage economies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for equilibrium prices. Exits 0 on convergence, 2 when the
    /// iteration limit is reached.
    Solve(SolveArgs),
    /// Parse and validate an economy file.
    Validate { file: PathBuf },
    /// Check that every agent has a feasible survival plan in every scenario.
    Recourse { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentingArg {
    SelfDual,
    Linf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Centroid,
    Random,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    /// Target residual: largest excess demand allowed at the solution.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Initial augmenting parameter.
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
    /// Growth factor of the augmenting parameter per round.
    #[arg(long, default_value_t = 1.259)]
    r_growth: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Price floor used when stepping.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    /// Number of starting points (centroid plus random draws).
    #[arg(long, default_value_t = 1)]
    multistart: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    ph_rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    ph_tol: f64,
    #[arg(long, default_value_t = 500)]
    ph_max_iter: usize,
    #[arg(long, value_enum, default_value_t = AugmentingArg::SelfDual)]
    augmenting: AugmentingArg,
    #[arg(long, value_enum, default_value_t = StartArg::Centroid)]
    start: StartArg,
    /// Write one CSV row per outer iteration.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Write a JSON summary of the solution.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Include wall-clock time in the summary (makes it non-reproducible).
    #[arg(long)]
    report_timings: bool,
}

impl SolveArgs {
    fn config(&self) -> SolverConfig<f64> {
        let mut cfg = SolverConfig {
            epsilon: self.epsilon,
            r0: self.r0,
            r_growth: self.r_growth,
            max_outer_iters: self.max_iters,
            delta: self.delta,
            multistart_k: self.multistart,
            seed: self.seed,
            augmenting: match self.augmenting {
                AugmentingArg::SelfDual => Augmenting::SelfDual,
                AugmentingArg::Linf => Augmenting::LinfBall,
            },
            ..SolverConfig::default()
        };
        cfg.ph.rho = self.ph_rho;
        cfg.ph.tol = self.ph_tol;
        cfg.ph.max_iter = self.ph_max_iter;
        cfg
    }
}

fn load(path: &Path) -> Result<Economy<f64>> {
    parse_economy(path).map_err(|e| match e {
        Error::InvalidEconomy(violations) => {
            let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
            anyhow::anyhow!("{} is not a valid economy:\n{}", path.display(), lines.join("\n"))
        }
        Error::Parse { path: at, line, column, message } => {
            anyhow::anyhow!("{}:{line}:{column}: at {at}: {message}", path.display())
        }
        other => anyhow::Error::new(other),
    })
}

fn run_solve(args: &SolveArgs) -> Result<u8> {
    let economy = load(&args.file)?;
    let cfg = args.config();
    let clock = Instant::now();
    let (start_label, outcome) = if args.multistart > 1 {
        let (index, out) = multistart_solve(&economy, &cfg)?;
        (format!("multistart:{index}"), out)
    } else {
        let (label, start) = match args.start {
            StartArg::Centroid => ("centroid", Start::Centroid),
            StartArg::Random => ("random", Start::Random),
        };
        (label.to_string(), solve(&economy, start, &cfg)?)
    };
    let elapsed_ms = clock.elapsed().as_secs_f64() * 1e3;

    if let Some(path) = &args.trajectory {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_trajectory(BufWriter::new(file), &outcome.trace, &economy)?;
    }
    let report = SummaryReport::new(
        &economy,
        &outcome,
        ConfigEcho { start: start_label, solver: cfg },
        args.report_timings.then_some(elapsed_ms),
    );
    if let Some(path) = &args.summary {
        std::fs::write(path, report.to_json() + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }

    let status = match outcome.trace.status {
        Status::Converged => "converged",
        Status::MaxIter => "iteration limit reached",
    };
    println!("{status} after {} iterations, residual {:.3e}", report.iterations, report.residual);
    let scaled: Vec<String> = report.prices_x100.stage0.iter().map(|p| format!("{p:.3}")).collect();
    println!("stage-0 prices x100: {}", scaled.join(" "));
    for block in &report.prices_x100.stage1 {
        let scaled: Vec<String> = block.values.iter().map(|p| format!("{p:.3}")).collect();
        println!("scenario {} prices x100: {}", block.scenario, scaled.join(" "));
    }
    Ok(match outcome.trace.status {
        Status::Converged => EXIT_OK,
        Status::MaxIter => EXIT_MAX_ITER,
    })
}

fn run_validate(file: &Path) -> Result<u8> {
    let e = load(file)?;
    println!(
        "ok: {} goods, {} agents, {} activities, {} scenarios",
        e.n_goods(),
        e.agents.len(),
        e.n_activities(),
        e.n_scenarios()
    );
    Ok(EXIT_OK)
}

fn run_recourse(file: &Path) -> Result<u8> {
    let e = load(file)?;
    let mut all_ok = true;
    for report in check_recourse(&e) {
        if report.feasible {
            println!("agent {}: survival plan feasible with no activity", report.agent);
            continue;
        }
        all_ok = false;
        println!("agent {}: survival plan infeasible", report.agent);
        for s in &report.shortfalls {
            let stage = match s.stage {
                Stage::Zero => "stage 0".to_string(),
                Stage::One(k) => format!("scenario {}", e.scenarios[k]),
            };
            println!("  {stage}, good {}: short by {:.6e}", e.goods[s.good], -s.slack);
        }
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_INPUT })
}

fn main() -> ExitCode {
    // Usage errors share the input-error code; clap's own default (2) means MaxIter here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Validate { file } => run_validate(file),
        Command::Recourse { file } => run_recourse(file),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
