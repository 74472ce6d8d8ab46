//! Monte Carlo harness: simulate, identify and aggregate over repetitions.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{solve_with, IterationRecord, SolveResult, SolverConfig};
use crate::config::{ExperimentConfig, Setup};
use crate::dataset::Dataset;
use crate::distributed::{run_distributed, DistributedConfig};
use crate::error::Result;
use crate::exec::Execution;
use crate::problem::Problem;

/// How each identification run is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunMode {
    Centralized,
    Distributed(DistributedConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rep: usize,
    pub seed: u64,
    pub theta0_init: Vec<f64>,
    /// Final `θ₀`; empty when the run failed.
    pub theta0: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub history: Vec<IterationRecord>,
}

impl RunRecord {
    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Componentwise statistics over the converged runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: Vec<f64>,
    /// `n − 1` denominator; zeros for a single run.
    pub std: Vec<f64>,
}

impl Aggregate {
    pub fn from_estimates(estimates: &[&[f64]]) -> Option<Self> {
        let first = estimates.first()?;
        let n = estimates.len() as f64;
        let dim = first.len();
        let mean: Vec<f64> = (0..dim).map(|c| estimates.iter().map(|e| e[c]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|c| {
                if estimates.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = estimates.iter().map(|e| (e[c] - mean[c]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect();
        Some(Self { runs: estimates.len(), mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub run_mode: RunMode,
    pub truth: Vec<f64>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub aggregate: Option<Aggregate>,
    /// Over runs that finished without error.
    pub median_iterations: Option<f64>,
    pub converged: usize,
    pub not_converged: usize,
    pub failed: usize,
    pub total_wall_time_s: f64,
}

impl ExperimentReport {
    pub fn assemble(
        config: ExperimentConfig,
        run_mode: RunMode,
        truth: Vec<f64>,
        runs: Vec<RunRecord>,
        total_wall_time_s: f64,
    ) -> Self {
        let converged: Vec<&[f64]> =
            runs.iter().filter(|r| r.converged && !r.is_failed()).map(|r| r.theta0.as_slice()).collect();
        let mut iters: Vec<usize> = runs.iter().filter(|r| !r.is_failed()).map(|r| r.iterations).collect();
        iters.sort_unstable();
        let median_iterations = (!iters.is_empty()).then(|| {
            let h = iters.len() / 2;
            if iters.len() % 2 == 1 {
                iters[h] as f64
            } else {
                (iters[h - 1] + iters[h]) as f64 / 2.0
            }
        });
        let failed = runs.iter().filter(|r| r.is_failed()).count();
        Self {
            seeds: runs.iter().map(|r| r.seed).collect(),
            aggregate: Aggregate::from_estimates(&converged),
            median_iterations,
            converged: converged.len(),
            not_converged: runs.len() - converged.len() - failed,
            failed,
            config,
            run_mode,
            truth,
            runs,
            total_wall_time_s,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Solves one problem with the given mode.
pub fn identify(problem: &Problem, solver: &SolverConfig, mode: &RunMode, exec: Execution) -> Result<SolveResult> {
    match mode {
        RunMode::Centralized => solve_with(problem, solver, exec),
        RunMode::Distributed(d) => Ok(run_distributed(problem, solver, d)?.result),
    }
}

/// Builds the identification problem for a measured dataset.
pub fn problem_from_dataset(setup: &Setup, data: &Dataset) -> Result<Problem> {
    setup.problem(&data.y0, &data.u0, data.n_samples)
}

/// Simulates and identifies repetition `rep`; errors are recorded, not returned.
pub fn run_repetition(cfg: &ExperimentConfig, setup: &Setup, rep: usize, mode: &RunMode, exec: Execution) -> RunRecord {
    let seed = cfg.seed(rep);
    let theta0_init = setup.initial_theta0(&cfg.init, seed);
    let start = Instant::now();
    let outcome = setup
        .simulate(&cfg.simulation, seed)
        .and_then(|out| setup.problem_from_simulation(&out))
        .and_then(|p| identify(&p, &cfg.solver.clone().with_theta0(theta0_init.clone()), mode, exec));
    let wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(res) => RunRecord {
            rep,
            seed,
            theta0_init,
            theta0: res.theta0,
            iterations: res.iterations,
            converged: res.converged,
            wall_time_s,
            error: None,
            history: res.history,
        },
        Err(e) => {
            log::warn!("repetition {rep} (seed {seed}) failed: {e}");
            RunRecord {
                rep,
                seed,
                theta0_init,
                theta0: Vec::new(),
                iterations: 0,
                converged: false,
                wall_time_s,
                error: Some(e.to_string()),
                history: Vec::new(),
            }
        }
    }
}

/// Runs `reps` (default: the config's count) repetitions.
///
/// Repetitions are spread over the pool; each one is solved sequentially
/// inside. A single repetition uses the pool for its node work instead.
pub fn run_experiment(cfg: &ExperimentConfig, reps: Option<usize>, mode: RunMode) -> Result<ExperimentReport> {
    let setup = cfg.build()?;
    let reps = reps.unwrap_or(cfg.repetitions);
    let start = Instant::now();
    let outer = match mode {
        RunMode::Distributed(_) => Execution::Sequential,
        RunMode::Centralized if reps > 1 => cfg.execution,
        RunMode::Centralized => Execution::Sequential,
    };
    let inner = if reps > 1 { Execution::Sequential } else { cfg.execution };
    let runs = outer.map(reps, |rep| run_repetition(cfg, &setup, rep, &mode, inner));
    let mut echo = cfg.clone();
    echo.repetitions = reps;
    Ok(ExperimentReport::assemble(echo, mode, setup.truth.clone(), runs, start.elapsed().as_secs_f64()))
}
