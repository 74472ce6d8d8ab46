//! Self-checks against the dense oracles, exposed as named suites.
//!
//! Each check function returns the measured quantity. [`run_suite`] compares
//! it against a fixed tolerance and reports one [`Check`] per quantity.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::admm::{
    solve_observed, solve_with, update_zx, AdaptiveRho, AdmmState, Phase, SolverConfig,
};
use crate::config::{ExperimentConfig, InitConfig, InitMode, Setup};
use crate::distributed::{audit_locality, run_distributed, DistributedConfig, IterateSnapshot};
use crate::error::{NetidError, Result};
use crate::exec::Execution;
use crate::models::families::{self, PdeBoundary};
use crate::models::{InputTerm, NodeModel, TyingMap};
use crate::oracle;
use crate::problem::Problem;
use crate::signal::norm;
use crate::sparse::SparseMatrix;
use crate::topology::NetworkTopology;

/// One measured quantity and its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value <= bound }
    }
}

pub const SUITES: [&str; 8] = ["ols", "stationarity", "schur", "tying", "dual", "distributed", "noiseless", "all"];

fn family_setup(json: &str) -> Result<(ExperimentConfig, Setup)> {
    let cfg = ExperimentConfig::from_json(json)?;
    let setup = cfg.build()?;
    Ok((cfg, setup))
}

/// Simulated PDE chain problem plus a truth-perturbed initial `θ₀`.
pub fn pde_instance(m: usize, n: usize, sigma: f64, perturb: f64, seed: u64) -> Result<(Problem, Vec<f64>)> {
    let (cfg, setup) = family_setup(&format!(
        r#"{{"family": "pde_chain", "M": {m}, "boundary": "mirrored",
            "simulation": {{"N": {n}, "noise_std": {sigma}, "seed": {seed}}}}}"#
    ))?;
    let out = setup.simulate(&cfg.simulation, seed)?;
    let init = setup.initial_theta0(&InitConfig { mode: InitMode::Truth, perturb_std: perturb, value: None }, seed);
    Ok((setup.problem_from_simulation(&out)?, init))
}

/// Simulated three-node ARX loop problem.
pub fn arx_instance(n: usize, seed: u64) -> Result<Problem> {
    let (cfg, setup) = family_setup(&format!(
        r#"{{"family": "arx_loop", "simulation": {{"N": {n}, "noise_std": 1.0, "seed": {seed}}}}}"#
    ))?;
    setup.problem_from_simulation(&setup.simulate(&cfg.simulation, seed)?)
}

fn adaptive(cfg: SolverConfig) -> SolverConfig {
    SolverConfig { adaptive: AdaptiveRho { enabled: true, ..Default::default() }, ..cfg }
}

/// Largest `|θ − θ_OLS|` after a tight ADMM solve of one ARX dataset.
pub fn ols_gap(n: usize, seed: u64) -> Result<f64> {
    let problem = arx_instance(n, seed)?;
    let cfg = adaptive(SolverConfig { eps_rel: 1e-8, eps_abs: 1e-10, max_iter: 20_000, ..Default::default() });
    let res = solve_with(&problem, &cfg, Execution::Sequential)?.into_converged()?;
    let ols: Vec<f64> = oracle::nodewise_ols(&problem).concat();
    Ok(res.theta.iter().zip(&ols).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Worst scaled gradient norms over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub iterations: usize,
    /// `‖∇_{(z,x)} L‖ / (1 + ‖(z, x)‖)` after the `(z, x)` update.
    pub zx: f64,
    /// `‖∇_θ L‖ / (1 + ‖θ‖)` after the `θ` update.
    pub theta: f64,
    /// `‖∇_{θ₀} L‖ / (1 + ‖θ₀‖)` after the `θ₀` update.
    pub theta0: f64,
}

impl Stationarity {
    pub fn worst(&self) -> f64 {
        self.zx.max(self.theta).max(self.theta0)
    }
}

/// `∂L/∂θ₀ = −Eᵀ(μ + ρ(θ − Eθ₀))`.
pub fn grad_theta0(tying: &TyingMap, state: &AdmmState) -> Vec<f64> {
    let e0 = tying.expand(&state.theta0);
    let v: Vec<f64> =
        state.mu.iter().zip(&state.theta).zip(&e0).map(|((m, t), e)| -(m + state.rho * (t - e))).collect();
    tying.transpose_apply(&v)
}

pub fn stationarity(problem: &Problem, cfg: &SolverConfig) -> Result<Stationarity> {
    let mut s = Stationarity::default();
    let mut obs = |phase: Phase, st: &AdmmState| match phase {
        Phase::ZxUpdated => {
            let (gz, gx) = oracle::grad_zx(problem, st);
            let g = (norm(&gz).powi(2) + norm(&gx).powi(2)).sqrt();
            let scale = 1.0 + (norm(&st.z).powi(2) + norm(&st.x).powi(2)).sqrt();
            s.zx = s.zx.max(g / scale);
        }
        Phase::ThetaUpdated => {
            s.theta = s.theta.max(norm(&oracle::grad_theta(problem, st)) / (1.0 + norm(&st.theta)));
        }
        Phase::Theta0Updated => {
            s.theta0 = s.theta0.max(norm(&grad_theta0(&problem.tying, st)) / (1.0 + norm(&st.theta0)));
        }
        Phase::IterationEnd => s.iterations = st.iter,
        Phase::DualsUpdated => {}
    };
    solve_observed(problem, cfg, Execution::Sequential, &mut obs)?;
    Ok(s)
}

/// Seeded stationarity runs on both experiment families.
pub fn stationarity_runs(seed: u64) -> Result<Stationarity> {
    let (pde, init) = pde_instance(5, 40, 1.0, 0.1, seed)?;
    let pde_cfg = SolverConfig { rho0: 100.0, max_iter: 30, theta0_init: Some(init), ..Default::default() };
    let arx = arx_instance(60, seed)?;
    let arx_cfg = adaptive(SolverConfig { max_iter: 30, ..Default::default() });
    let a = stationarity(&pde, &pde_cfg)?;
    let b = stationarity(&arx, &arx_cfg)?;
    Ok(Stationarity {
        iterations: a.iterations + b.iterations,
        zx: a.zx.max(b.zx),
        theta: a.theta.max(b.theta),
        theta0: a.theta0.max(b.theta0),
    })
}

/// Random network with at least one hidden output and `(m+p)N ≤ 200`, with
/// a random ADMM state to update from.
pub fn random_instance(seed: u64) -> Result<(Problem, AdmmState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(2..=4);
    let input_dims: Vec<usize> = (0..nodes).map(|_| rng.random_range(1..=2)).collect();
    let m: usize = input_dims.iter().sum();
    let p = nodes;
    let n = rng.random_range(4..=200 / (m + p)).min(14);
    let m0 = rng.random_range(1..=2);

    let mut gamma = Vec::new();
    let mut b = Vec::new();
    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut offset = 0;
    for (i, &mi) in input_dims.iter().enumerate() {
        for r in offset..offset + mi {
            // Feed from another node with probability 2/3, else externally.
            if rng.random_range(0..3) < 2 {
                let src = (i + rng.random_range(1..nodes)) % nodes;
                gamma.push((r, src, sign(&mut rng)));
                if rng.random::<bool>() {
                    b.push((r, rng.random_range(0..m0), 1.0));
                }
            } else {
                b.push((r, rng.random_range(0..m0), sign(&mut rng)));
            }
        }
        offset += mi;
    }
    let mut outputs: Vec<usize> = (0..p).collect();
    outputs.shuffle(&mut rng);
    let hidden = rng.random_range(1..=p);
    let mut measured: Vec<usize> = outputs[hidden..].to_vec();
    measured.sort_unstable();
    let c: Vec<(usize, usize, f64)> = measured.iter().enumerate().map(|(r, &o)| (r, o, 1.0)).collect();
    let topology = NetworkTopology::new(
        input_dims.clone(),
        vec![1; nodes],
        m0,
        SparseMatrix::new(m, p, gamma)?,
        SparseMatrix::new(m, m0, b)?,
        SparseMatrix::new(measured.len(), p, c)?,
    )?;

    let models = input_dims
        .iter()
        .enumerate()
        .map(|(i, &mi)| {
            let mut terms: Vec<InputTerm> = (0..mi)
                .flat_map(|ch| (1..=2).map(move |lag| InputTerm { channel: ch, lag }))
                .filter(|_| rng.random::<bool>())
                .collect();
            if terms.is_empty() {
                terms.push(InputTerm { channel: 0, lag: 1 });
            }
            NodeModel::new(i, rng.random_range(1..=2), mi, terms, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = models.iter().map(NodeModel::param_dim).collect();
    let tying = TyingMap::identity(&dims);
    let mut gauss = |len: usize, s: f64| -> Vec<f64> {
        (0..len).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let z0 = gauss((measured.len() + m0) * n, 1.0);
    let problem = Problem::new(topology, models, tying, &z0, n)?;

    let mut state = AdmmState::initial(&problem, &SolverConfig::default())?;
    state.theta = gauss(state.theta.len(), 0.5);
    state.lambda = gauss(state.lambda.len(), 1.0);
    state.mu = gauss(state.mu.len(), 1.0);
    state.z = gauss(state.z.len(), 1.0);
    state.rho = 10f64.powf(rng.random_range(-1.0..1.0));
    Ok((problem, state))
}

/// One random instance of the `(z, x)` comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurCase {
    /// Max abs difference between the structured and dense solutions.
    pub gap: f64,
    /// 2-norm condition number of the joint `(z, x)` system.
    pub condition: f64,
}

/// Structured `(z, x)` update against a dense KKT solve on `count` random instances.
pub fn schur_cases(count: usize, seed: u64) -> Result<Vec<SchurCase>> {
    (0..count as u64)
        .map(|k| {
            let (problem, mut state) = random_instance(seed.wrapping_mul(1000).wrapping_add(k))?;
            if problem.form.hidden_count() == 0 || problem.form.z_len() > 200 {
                return Err(NetidError::DimensionMismatch("random instance outside the intended size".into()));
            }
            let (z, x) = oracle::dense_zx(&problem, &state)?;
            let sv = oracle::dense_kkt(&problem, &state).0.singular_values();
            update_zx(&mut state, &problem, Execution::Sequential)?;
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            Ok(SchurCase { gap: d(&state.z, &z).max(d(&state.x, &x)), condition: sv.max() / sv.min() })
        })
        .collect()
}

/// Largest gap over [`schur_cases`].
pub fn schur_vs_dense(count: usize, seed: u64) -> Result<f64> {
    Ok(schur_cases(count, seed)?.iter().map(|c| c.gap).fold(0.0, f64::max))
}

/// Tying algebra of the literal PDE chain map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TyingAlgebra {
    /// Diagonal of `EᵀE` when it is diagonal.
    pub ete_diagonal: Option<Vec<f64>>,
    /// Largest gap between averaging and the dense normal-equation solve.
    pub averaging_gap: f64,
}

pub fn tying_algebra(m: usize, samples: usize, seed: u64) -> Result<TyingAlgebra> {
    let (cfg, setup) = family_setup(&format!(
        r#"{{"family": "pde_chain", "M": {m}, "boundary": "literal", "simulation": {{"N": 10}}}}"#
    ))?;
    let e = setup.tying.to_dense();
    let ete = e.transpose() * &e;
    let r = ete.nrows();
    let off_diagonal = (0..r).any(|a| (0..r).any(|b| a != b && ete[(a, b)] != 0.0));
    let ete_diagonal = (!off_diagonal).then(|| (0..r).map(|a| ete[(a, a)]).collect());

    let n = cfg.simulation.n_samples;
    let y0 = vec![0.0; setup.topology.measured_outputs() * n];
    let u0 = vec![0.0; setup.topology.external_inputs() * n];
    let problem = setup.problem(&y0, &u0, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap: f64 = 0.0;
    for _ in 0..samples {
        let mut state = AdmmState::initial(&problem, &SolverConfig::default())?;
        state.theta = (0..state.theta.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        crate::admm::update_theta0(&mut state, &problem.tying)?;
        let dense = oracle::dense_theta0(&problem, &state.theta)
            .ok_or_else(|| NetidError::DimensionMismatch("EᵀE is singular".into()))?;
        gap = state.theta0.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
    }
    Ok(TyingAlgebra { ete_diagonal, averaging_gap: gap })
}

/// Worst `‖Eᵀμ‖ / ‖μ‖` over every iteration of a run.
pub fn dual_invariant(problem: &Problem, cfg: &SolverConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut obs = |phase: Phase, st: &AdmmState| {
        if phase == Phase::DualsUpdated {
            let mu = norm(&st.mu);
            if mu > 0.0 {
                worst = worst.max(norm(&problem.tying.transpose_apply(&st.mu)) / mu);
            }
        }
    };
    solve_observed(problem, cfg, Execution::Sequential, &mut obs)?;
    Ok(worst)
}

/// Dual invariant on the PDE chain (both boundary maps) and the ARX loop.
pub fn dual_invariant_runs(seed: u64) -> Result<f64> {
    let (pde, init) = pde_instance(5, 60, 1.0, 0.1, seed)?;
    let mut worst: f64 = 0.0;
    for boundary in [PdeBoundary::Mirrored, PdeBoundary::Literal] {
        let tying = families::build_tying_pde_with(5, boundary)?;
        let problem = Problem::from_form(pde.topology.clone(), pde.form.clone(), pde.models.clone(), tying)?;
        let cfg = SolverConfig { rho0: 1000.0, max_iter: 40, theta0_init: Some(init.clone()), ..Default::default() };
        worst = worst.max(dual_invariant(&problem, &cfg)?);
    }
    let arx = arx_instance(100, seed)?;
    worst = worst.max(dual_invariant(&arx, &adaptive(SolverConfig { max_iter: 40, ..Default::default() }))?);
    Ok(worst)
}

/// Distributed run against the centralized trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributedCheck {
    pub iterations: usize,
    pub max_diff: f64,
    pub messages: usize,
    pub violations: usize,
}

pub fn distributed_equivalence(m: usize, iterations: usize, workers: usize, seed: u64) -> Result<DistributedCheck> {
    let (problem, init) = pde_instance(m, 60, 1.0, 0.1, seed)?;
    let cfg = SolverConfig {
        eps_abs: 0.0,
        eps_rel: 0.0,
        rho0: 10.0,
        adaptive: AdaptiveRho { enabled: true, ..Default::default() },
        max_iter: iterations,
        theta0_init: Some(init),
    };
    let mut reference = Vec::new();
    let mut obs = |phase: Phase, st: &AdmmState| {
        if phase == Phase::IterationEnd {
            reference.push(IterateSnapshot::from_state(st));
        }
    };
    solve_observed(&problem, &cfg, Execution::Sequential, &mut obs)?;
    let dist = DistributedConfig { workers, record_snapshots: true, ..Default::default() };
    let run = run_distributed(&problem, &cfg, &dist)?;
    let mut max_diff = if run.snapshots.len() == reference.len() { 0.0 } else { f64::INFINITY };
    for (a, b) in run.snapshots.iter().zip(&reference) {
        max_diff = f64::max(max_diff, a.max_abs_diff(b));
    }
    let audit = audit_locality(&problem, &run.log);
    Ok(DistributedCheck {
        iterations: run.snapshots.len(),
        max_diff,
        messages: audit.messages,
        violations: audit.violations.len(),
    })
}

/// Noiseless PDE chain identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn noiseless_recovery(m: usize, n: usize, perturb: f64, cfg: &SolverConfig, seed: u64) -> Result<Recovery> {
    let (problem, init) = pde_instance(m, n, 0.0, perturb, seed)?;
    let res = solve_with(&problem, &cfg.clone().with_theta0(init), Execution::default())?;
    let error =
        res.theta0.iter().zip(&families::PDE_TRUTH).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Recovery { error, iterations: res.iterations, converged: res.converged })
}

/// Solver settings used for the noiseless checks.
pub fn noiseless_solver() -> SolverConfig {
    SolverConfig { rho0: 1000.0, eps_rel: 1e-6, eps_abs: 1e-9, max_iter: 5000, ..Default::default() }
}

/// Runs a named suite (see [`SUITES`]).
pub fn run_suite(name: &str) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let all = name == "all";
    if !SUITES.contains(&name) {
        return Err(NetidError::Config(format!("unknown suite {name:?}; expected one of {SUITES:?}")));
    }
    if all || name == "ols" {
        out.push(Check::at_most("ols: max |θ − θ_ols|", ols_gap(300, 11)?, 1e-3));
    }
    if all || name == "stationarity" {
        let s = stationarity_runs(12)?;
        out.push(Check::at_most("stationarity: (z,x) block", s.zx, 1e-8));
        out.push(Check::at_most("stationarity: θ block", s.theta, 1e-8));
        out.push(Check::at_most("stationarity: θ₀ block", s.theta0, 1e-8));
    }
    if all || name == "schur" {
        out.push(Check::at_most("schur: structured vs dense KKT", schur_vs_dense(20, 13)?, 1e-9));
    }
    if all || name == "tying" {
        let t = tying_algebra(5, 20, 14)?;
        let expected = [5.0, 5.0, 5.0, 9.0, 5.0];
        let exact = t.ete_diagonal.as_deref() == Some(&expected[..]);
        out.push(Check { name: "tying: EᵀE = diag(5,5,5,9,5)".into(), value: f64::from(u8::from(!exact)), bound: 0.0, pass: exact });
        out.push(Check::at_most("tying: averaging vs normal equations", t.averaging_gap, 1e-12));
    }
    if all || name == "dual" {
        out.push(Check::at_most("dual: max ‖Eᵀμ‖/‖μ‖", dual_invariant_runs(15)?, 1e-10));
    }
    if all || name == "distributed" {
        let d = distributed_equivalence(5, 50, 3, 16)?;
        out.push(Check::at_most("distributed: max iterate gap", d.max_diff, 1e-10));
        out.push(Check::at_most("distributed: out-of-neighborhood reads", d.violations as f64, 0.0));
    }
    if all || name == "noiseless" {
        let r = noiseless_recovery(5, 200, 0.05, &noiseless_solver(), 17)?;
        out.push(Check::at_most("noiseless: max |θ₀ − truth|", r.error, 1e-3));
        let t = noiseless_recovery(5, 200, 0.0, &SolverConfig { rho0: 1000.0, ..Default::default() }, 18)?;
        out.push(Check::at_most("noiseless at truth: max |θ₀ − truth|", t.error, 1e-6));
        out.push(Check::at_most("noiseless at truth: iterations", t.iterations as f64, 5.0));
    }
    Ok(out)
}
