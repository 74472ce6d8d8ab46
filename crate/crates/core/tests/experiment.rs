use netid::config::ExperimentConfig;
use netid::experiment::{run_experiment, Aggregate, ExperimentReport, RunMode};
use netid::distributed::DistributedConfig;

fn small_arx(reps: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"family": "arx_loop", "simulation": {{"N": 120, "seed": 40}},
            "solver": {{"adaptive": {{"enabled": true}}}}, "repetitions": {reps}}}"#
    ))
    .unwrap()
}

fn without_times(report: &ExperimentReport) -> String {
    let mut r = report.clone();
    r.total_wall_time_s = 0.0;
    for run in &mut r.runs {
        run.wall_time_s = 0.0;
    }
    r.to_json().unwrap()
}

#[test]
fn aggregates_are_recomputable_from_the_runs() {
    let report = run_experiment(&small_arx(6), None, RunMode::Centralized).unwrap();
    assert_eq!(report.runs.len(), 6);
    assert_eq!(report.seeds, (40..46).collect::<Vec<u64>>());
    let estimates: Vec<&[f64]> = report.runs.iter().filter(|r| r.converged).map(|r| r.theta0.as_slice()).collect();
    assert_eq!(report.aggregate, Aggregate::from_estimates(&estimates));
    let agg = report.aggregate.as_ref().unwrap();
    for c in 0..agg.mean.len() {
        let mean = estimates.iter().map(|e| e[c]).sum::<f64>() / estimates.len() as f64;
        let var = estimates.iter().map(|e| (e[c] - mean).powi(2)).sum::<f64>() / (estimates.len() - 1) as f64;
        assert_eq!(agg.mean[c], mean);
        assert_eq!(agg.std[c], var.sqrt());
    }
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let a = run_experiment(&small_arx(4), None, RunMode::Centralized).unwrap();
    let b = run_experiment(&small_arx(4), None, RunMode::Centralized).unwrap();
    assert_eq!(without_times(&a), without_times(&b));
    let mut seq = small_arx(4);
    seq.execution = netid::Execution::Sequential;
    let c = run_experiment(&seq, None, RunMode::Centralized).unwrap();
    assert_eq!(a.runs.iter().map(|r| &r.theta0).collect::<Vec<_>>(), c.runs.iter().map(|r| &r.theta0).collect::<Vec<_>>());
}

#[test]
fn distributed_mode_gives_the_same_estimates() {
    let a = run_experiment(&small_arx(2), None, RunMode::Centralized).unwrap();
    let b = run_experiment(&small_arx(2), None, RunMode::Distributed(DistributedConfig { workers: 2, ..Default::default() })).unwrap();
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.theta0, y.theta0);
        assert_eq!(x.iterations, y.iterations);
    }
}

#[test]
fn noiseless_run_from_the_truth_stays_there() {
    let cfg = ExperimentConfig::from_json(
        r#"{"family": "pde_chain", "M": 5, "boundary": "mirrored",
            "simulation": {"N": 100, "noise_std": 0.0, "seed": 41},
            "solver": {"rho0": 1000.0}, "init": {"mode": "truth"}}"#,
    )
    .unwrap();
    let report = run_experiment(&cfg, None, RunMode::Centralized).unwrap();
    let run = &report.runs[0];
    assert!(run.converged && run.iterations <= 5);
    for (a, b) in run.theta0.iter().zip(&report.truth) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn capped_runs_are_counted_and_bad_truth_is_rejected() {
    let mut cfg = small_arx(3);
    cfg.solver.max_iter = 2;
    cfg.init.mode = netid::config::InitMode::Fixed;
    cfg.init.value = None;
    let report = run_experiment(&cfg, Some(3), RunMode::Centralized).unwrap();
    assert_eq!((report.converged, report.not_converged, report.failed), (0, 3, 0));
    assert!(report.aggregate.is_none());
    assert_eq!(report.config.repetitions, 3);

    cfg.solver.max_iter = 5000;
    cfg.truth = Some(vec![0.0; 12]);
    cfg.family = netid::config::FamilyConfig::PdeChain { node_count: 5, boundary: Default::default() };
    assert!(run_experiment(&cfg, Some(1), RunMode::Centralized).is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    for name in ["arx_loop.json", "pde_chain.json", "pde_noiseless.json"] {
        let cfg = ExperimentConfig::load(format!("{dir}/{name}")).unwrap();
        cfg.build().unwrap();
    }
}
