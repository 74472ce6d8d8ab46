use netid::admm::{solve_observed, AdaptiveRho, AdmmState, Phase, SolverConfig};
use netid::config::{ExperimentConfig, InitConfig, InitMode};
use netid::distributed::{
    audit_locality, run_distributed, write_message_log, Direction, DistributedConfig, IterateSnapshot, MessageRecord,
};
use netid::problem::Problem;
use netid::{Execution, NetidError};

fn pde_problem(m: usize, n: usize, seed: u64) -> (Problem, Vec<f64>) {
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"family": "pde_chain", "M": {m}, "boundary": "mirrored",
            "simulation": {{"N": {n}, "noise_std": 1.0, "seed": {seed}}}}}"#
    ))
    .unwrap();
    let setup = cfg.build().unwrap();
    let out = setup.simulate(&cfg.simulation, seed).unwrap();
    let init = setup.initial_theta0(&InitConfig { mode: InitMode::Truth, perturb_std: 0.1, value: None }, seed);
    (setup.problem_from_simulation(&out).unwrap(), init)
}

fn centralized_trace(problem: &Problem, cfg: &SolverConfig) -> Vec<IterateSnapshot> {
    let mut trace = Vec::new();
    let mut obs = |phase: Phase, s: &AdmmState| {
        if phase == Phase::IterationEnd {
            trace.push(IterateSnapshot::from_state(s));
        }
    };
    solve_observed(problem, cfg, Execution::Sequential, &mut obs).unwrap();
    trace
}

fn fixed_budget(theta0: Vec<f64>, iters: usize) -> SolverConfig {
    SolverConfig {
        eps_abs: 0.0,
        eps_rel: 0.0,
        rho0: 10.0,
        adaptive: AdaptiveRho { enabled: true, ..Default::default() },
        max_iter: iters,
        theta0_init: Some(theta0),
    }
}

#[test]
fn matches_centralized_iterates() {
    let (problem, init) = pde_problem(5, 60, 3);
    let cfg = fixed_budget(init, 50);
    let reference = centralized_trace(&problem, &cfg);
    for workers in [1, 2, 5] {
        let dist = DistributedConfig { workers, record_snapshots: true, ..Default::default() };
        let run = run_distributed(&problem, &cfg, &dist).unwrap();
        assert_eq!(run.snapshots.len(), 50);
        for (a, b) in run.snapshots.iter().zip(&reference) {
            assert_eq!(a.iter, b.iter);
            assert!(a.max_abs_diff(b) <= 1e-10, "workers {workers}, iter {}: {}", a.iter, a.max_abs_diff(b));
        }
        let audit = audit_locality(&problem, &run.log);
        assert!(audit.is_clean(), "{:?}", audit.violations);
        assert!(audit.messages > 0);
    }
}

#[test]
fn final_result_matches_and_converges() {
    let (problem, init) = pde_problem(5, 80, 4);
    let cfg = SolverConfig {
        eps_rel: 1e-1,
        eps_abs: 1e-4,
        rho0: 1000.0,
        max_iter: 2000,
        theta0_init: Some(init),
        ..Default::default()
    };
    let central = netid::admm::solve_with(&problem, &cfg, Execution::Sequential).unwrap();
    let dist = run_distributed(&problem, &cfg, &DistributedConfig { workers: 3, ..Default::default() }).unwrap();
    assert_eq!(dist.result.iterations, central.iterations);
    assert_eq!(dist.result.converged, central.converged);
    assert_eq!(dist.result.history, central.history);
    assert_eq!(dist.result.theta0, central.theta0);
    assert_eq!(dist.result.lambda, central.lambda);
}

#[test]
fn log_records_only_local_reads() {
    let (problem, init) = pde_problem(7, 30, 5);
    let run = run_distributed(&problem, &fixed_budget(init, 3), &DistributedConfig::default()).unwrap();
    for rec in run.log.iter().filter(|r| r.direction == Direction::ToWorker && r.kind == "broadcast") {
        assert_eq!(rec.x_indices, problem.coupling(rec.node).hidden);
        assert_eq!(rec.theta0_indices, problem.tying.node_globals(rec.node));
    }
    let mut buf = Vec::new();
    write_message_log(&run.log, &mut buf).unwrap();
    let lines: Vec<MessageRecord> =
        String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines, run.log);
}

#[test]
fn audit_flags_foreign_reads() {
    let (problem, init) = pde_problem(5, 20, 6);
    let mut log = run_distributed(&problem, &fixed_budget(init, 1), &DistributedConfig::default()).unwrap().log;
    let rec = log.iter_mut().find(|r| r.kind == "broadcast" && r.node == 0).unwrap();
    rec.x_indices.push(problem.form.hidden_count() - 1);
    let audit = audit_locality(&problem, &log);
    assert!(!audit.is_clean());
}

#[test]
fn worker_errors_surface() {
    let (problem, _) = pde_problem(5, 20, 7);
    let cfg = SolverConfig { theta0_init: Some(vec![0.0; 2]), ..Default::default() };
    assert!(matches!(
        run_distributed(&problem, &cfg, &DistributedConfig::default()),
        Err(NetidError::DimensionMismatch(_))
    ));
    let bad = DistributedConfig { timeout_s: 0.0, ..Default::default() };
    assert!(run_distributed(&problem, &SolverConfig::default(), &bad).is_err());
}
