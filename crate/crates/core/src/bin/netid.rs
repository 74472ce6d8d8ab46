use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use netid::admm::{IterationRecord, SolveResult};
use netid::config::ExperimentConfig;
use netid::dataset::{write_history, Dataset};
use netid::distributed::{run_distributed, write_message_log, DistributedConfig};
use netid::experiment::{identify, problem_from_dataset, run_experiment, RunMode};
use netid::verify::{run_suite, SUITES};

#[derive(Parser)]
#[command(name = "netid", version, about = "Identify interconnected dynamical systems with ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop data record.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write every node output, hidden ones included.
        #[arg(long)]
        emit_hidden: bool,
        /// Repetition whose seed is used.
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Identify parameters from a measured record.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Convergence history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Repeat simulate + identify and aggregate the estimates.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-run history CSVs; defaults to `<out>_traces`.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Run a self-check suite.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Args)]
struct DistArgs {
    /// Run the coordinator/worker execution.
    #[arg(long)]
    distributed: bool,
    #[arg(long, default_value_t = 4, requires = "distributed")]
    workers: usize,
    /// Message log as JSON lines (identify only).
    #[arg(long, requires = "distributed")]
    message_log: Option<PathBuf>,
}

impl DistArgs {
    fn mode(&self) -> RunMode {
        if self.distributed {
            RunMode::Distributed(DistributedConfig { workers: self.workers, ..Default::default() })
        } else {
            RunMode::Centralized
        }
    }
}

#[derive(Serialize)]
struct IdentifyOutput<'a> {
    theta0: &'a [f64],
    theta: Vec<&'a [f64]>,
    iterations: usize,
    converged: bool,
    rho: f64,
    theta0_init: &'a [f64],
    final_residuals: Option<&'a IterationRecord>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    Ok(())
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn simulate(config: &Path, out: &Path, emit_hidden: bool, rep: usize) -> Result<()> {
    let cfg = load(config)?;
    let setup = cfg.build()?;
    let sim = setup.simulate(&cfg.simulation, cfg.seed(rep))?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    Dataset::from_simulation(&sim, emit_hidden).write_csv(BufWriter::new(file))?;
    Ok(())
}

fn identify_cmd(config: &Path, data: &Path, out: &Path, history: Option<&Path>, dist: &DistArgs) -> Result<()> {
    let cfg = load(config)?;
    let setup = cfg.build()?;
    let file = File::open(data).with_context(|| format!("opening {}", data.display()))?;
    let dataset = Dataset::read_csv(BufReader::new(file))?;
    let problem = problem_from_dataset(&setup, &dataset)?;
    let init = setup.initial_theta0(&cfg.init, cfg.seed(0));
    let solver = cfg.solver.clone().with_theta0(init.clone());
    let result: SolveResult = match (&dist.mode(), &dist.message_log) {
        (RunMode::Distributed(d), Some(log_path)) => {
            let run = run_distributed(&problem, &solver, d)?;
            write_message_log(&run.log, BufWriter::new(File::create(log_path)?))?;
            run.result
        }
        (mode, _) => identify(&problem, &solver, mode, cfg.execution)?,
    };
    if !result.converged {
        log::warn!("not converged after {} iterations", result.iterations);
    }
    let theta = (0..problem.node_count()).map(|i| &result.theta[problem.tying.node_range(i)]).collect();
    write_json(
        out,
        &IdentifyOutput {
            theta0: &result.theta0,
            theta,
            iterations: result.iterations,
            converged: result.converged,
            rho: result.rho,
            theta0_init: &init,
            final_residuals: result.history.last(),
        },
    )?;
    if let Some(path) = history {
        write_history(&result.history, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn montecarlo(config: &Path, reps: Option<usize>, out: &Path, traces: Option<&Path>, dist: &DistArgs) -> Result<()> {
    if dist.message_log.is_some() {
        bail!("--message-log is only supported by identify");
    }
    let cfg = load(config)?;
    let report = run_experiment(&cfg, reps, dist.mode())?;
    write_json(out, &report)?;
    let dir = traces.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = out.file_stem().unwrap_or_default().to_os_string();
        name.push("_traces");
        out.with_file_name(name)
    });
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for run in &report.runs {
        let path = dir.join(format!("run_{:04}.csv", run.rep));
        write_history(&run.history, BufWriter::new(File::create(path)?))?;
    }
    if let Some(agg) = &report.aggregate {
        println!("converged {}/{} (failed {})", report.converged, report.runs.len(), report.failed);
        println!("mean {:?}", agg.mean);
        println!("std  {:?}", agg.std);
    } else {
        println!("no converged runs out of {}", report.runs.len());
    }
    if let Some(m) = report.median_iterations {
        println!("median iterations {m}");
    }
    Ok(())
}

fn verify(suite: &str) -> Result<bool> {
    if !SUITES.contains(&suite) {
        bail!("unknown suite {suite:?}; expected one of {}", SUITES.join(", "));
    }
    let checks = run_suite(suite)?;
    for c in &checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}: {:.3e} (bound {:.1e})", c.name, c.value, c.bound);
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, out, emit_hidden, rep } => simulate(config, out, *emit_hidden, *rep).map(|_| true),
        Command::Identify { config, data, out, history, dist } => {
            identify_cmd(config, data, out, history.as_deref(), dist).map(|_| true)
        }
        Command::Montecarlo { config, reps, out, traces, dist } => {
            montecarlo(config, *reps, out, traces.as_deref(), dist).map(|_| true)
        }
        Command::Verify { suite } => verify(suite),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
