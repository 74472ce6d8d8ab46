//! ADMM on the augmented Lagrangian
//!
//! ```text
//! L_ρ = Σ‖Tᵢ(θᵢ) zᵢ‖² + λᵀ(z - Ax - b) + μᵀ(θ - Eθ₀)
//!       + ρ/2 ‖z - Ax - b‖² + ρ/2 ‖θ - Eθ₀‖²
//! ```
//!
//! One sweep updates `(x, z)` for fixed `θ`, then `θ` for fixed `(z, θ₀)`,
//! then `θ₀` from the new `θ`, then the duals, and finally evaluates the
//! stopping test and (optionally) adapts `ρ`. Placing the `θ₀` average after
//! the `θ` solve keeps `Eᵀμ = 0` for `μ₀ = 0`, which is what makes the
//! averaging form of the `θ₀` minimization exact.

mod node;
mod schur;

use serde::{Deserialize, Serialize};

use crate::error::{NetidError, Result};
use crate::exec::Execution;
use crate::models::TyingMap;
use crate::problem::Problem;
use crate::signal::norm;

pub use node::{
    dual_update, gather_x, local_apply_a, local_apply_at, reduce_theta0, residual_contribution, shifted_dual,
    theta_contribution, theta_update, NodeIterates, NodeSystem, ResidualContribution, SchurContribution,
    ThetaContribution,
};
pub use schur::solve_schur;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveRho {
    pub enabled: bool,
    /// Residual balance factor; `ρ` moves when one residual exceeds this
    /// multiple of the other.
    pub mu_balance: f64,
    pub tau: f64,
}

impl Default for AdaptiveRho {
    fn default() -> Self {
        Self { enabled: false, mu_balance: 10.0, tau: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub rho0: f64,
    pub adaptive: AdaptiveRho,
    pub max_iter: usize,
    /// Initial `θ₀`; zeros when absent.
    pub theta0_init: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-3,
            rho0: 1.0,
            adaptive: AdaptiveRho::default(),
            max_iter: 5000,
            theta0_init: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho0.is_nan() || self.rho0 <= 0.0 {
            return Err(NetidError::Config(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) {
            return Err(NetidError::Config("tolerances must be non-negative".into()));
        }
        if self.adaptive.enabled && !(self.adaptive.mu_balance > 1.0 && self.adaptive.tau > 1.0) {
            return Err(NetidError::Config(format!(
                "adaptive rho needs mu_balance > 1 and tau > 1, got {} and {}",
                self.adaptive.mu_balance, self.adaptive.tau
            )));
        }
        Ok(())
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Self {
        self.theta0_init = Some(theta0);
        self
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub r_p: f64,
    pub r_d: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    /// Penalty used during this iteration.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub theta0: Vec<f64>,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: f64,
    pub iter: usize,
    pub z_prev: Vec<f64>,
    pub theta_prev: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl AdmmState {
    /// `x = 0`, `z = b`, `λ = 0`, `μ = 0`, `ρ = ρ₀`, `θ₀` from the config and
    /// `θ = E θ₀`.
    pub fn initial(problem: &Problem, cfg: &SolverConfig) -> Result<Self> {
        let r = problem.tying.global_dim();
        let theta0 = match &cfg.theta0_init {
            Some(t) if t.len() != r => {
                return Err(NetidError::DimensionMismatch(format!(
                    "theta0_init has length {}, expected {r}",
                    t.len()
                )))
            }
            Some(t) => t.clone(),
            None => vec![0.0; r],
        };
        let theta = problem.tying.expand(&theta0);
        let z = problem.form.b().to_vec();
        Ok(Self {
            x: vec![0.0; problem.form.x_len()],
            lambda: vec![0.0; z.len()],
            mu: vec![0.0; theta.len()],
            z_prev: z.clone(),
            theta_prev: theta.clone(),
            theta0,
            z,
            theta,
            rho: cfg.rho0,
            iter: 0,
            history: Vec::new(),
        })
    }

    pub fn node_theta(&self, tying: &TyingMap, i: usize) -> &[f64] {
        &self.theta[tying.node_range(i)]
    }
}

/// Points in the sweep at which an observer sees the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    ZxUpdated,
    ThetaUpdated,
    Theta0Updated,
    DualsUpdated,
    IterationEnd,
}

pub trait Observer {
    fn observe(&mut self, phase: Phase, state: &AdmmState);
}

impl<F: FnMut(Phase, &AdmmState)> Observer for F {
    fn observe(&mut self, phase: Phase, state: &AdmmState) {
        self(phase, state)
    }
}

struct Silent;

impl Observer for Silent {
    fn observe(&mut self, _: Phase, _: &AdmmState) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub theta0: Vec<f64>,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn from_state(state: AdmmState, converged: bool) -> Self {
        Self {
            theta0: state.theta0,
            theta: state.theta,
            z: state.z,
            x: state.x,
            lambda: state.lambda,
            mu: state.mu,
            rho: state.rho,
            iterations: state.iter,
            converged,
            history: state.history,
        }
    }

    /// Fails with [`NetidError::MaxIterExceeded`] when the run did not converge.
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(NetidError::MaxIterExceeded(self.iterations))
        }
    }
}

/// Result of the stopping test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCheck {
    pub stop: bool,
    pub r_p: f64,
    pub r_d: f64,
    pub eps_p: f64,
    pub eps_d: f64,
}

/// Minimizes `L_ρ` over `(z, x)` for the current `θ`, `λ`, `ρ`.
pub fn update_zx(state: &mut AdmmState, problem: &Problem, exec: Execution) -> Result<()> {
    let n = problem.n_samples();
    let m = problem.node_count();
    let tying = &problem.tying;
    let systems = exec.try_map(m, |i| {
        NodeSystem::new(
            &problem.models[i],
            problem.coupling(i),
            &state.theta[tying.node_range(i)],
            state.rho,
            n,
        )
    })?;
    let r: Vec<Vec<f64>> = exec.map(m, |i| {
        let range = problem.form.node_range(i);
        shifted_dual(&state.lambda[range.clone()], &problem.form.b()[range], state.rho)
    });
    if problem.form.hidden_count() > 0 {
        let contributions = exec.map(m, |i| systems[i].schur_contribution(&r[i]));
        state.x = solve_schur(problem.form.hidden_count(), n, &contributions, state.rho)?;
    }
    let x = &state.x;
    let zs = exec.map(m, |i| systems[i].solve_z(&gather_x(problem.coupling(i), x, n), &r[i]));
    for (i, zi) in zs.into_iter().enumerate() {
        state.z[problem.form.node_range(i)].copy_from_slice(&zi);
    }
    Ok(())
}

/// Minimizes `L_ρ` over `θ` for the current `(z, θ₀, μ, ρ)`.
pub fn update_theta(state: &mut AdmmState, problem: &Problem, exec: Execution) -> Result<()> {
    let n = problem.n_samples();
    let tying = &problem.tying;
    let thetas = exec.try_map(problem.node_count(), |i| {
        theta_update(
            &problem.models[i],
            &state.z[problem.form.node_range(i)],
            n,
            &tying.gather(i, &state.theta0),
            &state.mu[tying.node_range(i)],
            state.rho,
        )
    })?;
    for (i, th) in thetas.into_iter().enumerate() {
        state.theta[tying.node_range(i)].copy_from_slice(&th);
    }
    Ok(())
}

/// Solves `EᵀE θ₀ = Eᵀ θ` by degree-weighted averaging.
pub fn update_theta0(state: &mut AdmmState, tying: &TyingMap) -> Result<()> {
    let contributions: Vec<ThetaContribution> = (0..tying.node_count())
        .map(|i| theta_contribution(tying, i, &state.theta[tying.node_range(i)]))
        .collect();
    state.theta0 = reduce_theta0(tying.global_dim(), &contributions)?;
    Ok(())
}

/// `λ += ρ(z - Ax - b)`, `μ += ρ(θ - Eθ₀)`, node by node.
pub fn update_duals(state: &mut AdmmState, problem: &Problem) {
    let n = problem.n_samples();
    let tying = &problem.tying;
    for i in 0..problem.node_count() {
        let zr = problem.form.node_range(i);
        let tr = tying.node_range(i);
        let coupling = problem.coupling(i);
        dual_update(
            coupling,
            &gather_x(coupling, &state.x, n),
            &state.z[zr.clone()],
            &problem.form.b()[zr.clone()],
            &state.theta[tr.clone()],
            &tying.gather(i, &state.theta0),
            state.rho,
            &mut state.lambda[zr],
            &mut state.mu[tr],
        );
    }
}

/// Combines node residual contributions (in node order) into the stopping
/// test.
pub fn combine_residuals(
    problem: &Problem,
    contributions: &[ResidualContribution],
    rho: f64,
    cfg: &SolverConfig,
) -> StopCheck {
    let n = problem.n_samples();
    let xlen = problem.form.x_len();
    let r = problem.tying.global_dim();
    let mut at_dz = vec![0.0; xlen];
    let mut at_lambda = vec![0.0; xlen];
    let mut et_dtheta = vec![0.0; r];
    let mut et_mu = vec![0.0; r];
    let (mut primal, mut ax, mut z, mut b) = (0.0, 0.0, 0.0, 0.0);
    for (i, c) in contributions.iter().enumerate() {
        primal += c.primal_z_sq + c.primal_theta_sq;
        ax += c.ax_sq + c.e_theta0_sq;
        z += c.z_sq + c.theta_sq;
        b += c.b_sq;
        for (jj, &j) in problem.coupling(i).hidden.iter().enumerate() {
            for t in 0..n {
                at_dz[j * n + t] += c.at_dz[jj * n + t];
                at_lambda[j * n + t] += c.at_lambda[jj * n + t];
            }
        }
        for &(j, s, _) in &c.et_dtheta {
            et_dtheta[j] += s;
        }
        for &(j, s, _) in &c.et_mu {
            et_mu[j] += s;
        }
    }
    let r_p = primal.sqrt();
    let r_d = rho * (norm(&at_dz).powi(2) + norm(&et_dtheta).powi(2)).sqrt();
    let q = problem.tying.param_dim();
    let eps_p = ((problem.form.z_len() + q) as f64).sqrt() * cfg.eps_abs
        + cfg.eps_rel * ax.sqrt().max(z.sqrt()).max(b.sqrt());
    let eps_d = ((xlen + r) as f64).sqrt() * cfg.eps_abs
        + cfg.eps_rel * (norm(&at_lambda).powi(2) + norm(&et_mu).powi(2)).sqrt();
    StopCheck { stop: r_p <= eps_p && r_d <= eps_d, r_p, r_d, eps_p, eps_d }
}

/// Primal/dual residuals and tolerances for the current state.
pub fn stopping_test(state: &AdmmState, problem: &Problem, cfg: &SolverConfig) -> StopCheck {
    let n = problem.n_samples();
    let tying = &problem.tying;
    let contributions: Vec<ResidualContribution> = (0..problem.node_count())
        .map(|i| {
            let zr = problem.form.node_range(i);
            let tr = tying.node_range(i);
            let coupling = problem.coupling(i);
            let ax = local_apply_a(coupling, &gather_x(coupling, &state.x, n), n);
            let theta_bar = tying.gather(i, &state.theta0);
            residual_contribution(
                coupling,
                tying,
                i,
                n,
                &NodeIterates {
                    z: &state.z[zr.clone()],
                    z_prev: &state.z_prev[zr.clone()],
                    ax: &ax,
                    b: &problem.form.b()[zr.clone()],
                    lambda: &state.lambda[zr],
                    theta: &state.theta[tr.clone()],
                    theta_prev: &state.theta_prev[tr.clone()],
                    theta_bar: &theta_bar,
                    mu: &state.mu[tr],
                },
            )
        })
        .collect();
    combine_residuals(problem, &contributions, state.rho, cfg)
}

/// Residual-balancing penalty update.
pub fn adapt_rho(rho: f64, r_p: f64, r_d: f64, adaptive: &AdaptiveRho) -> f64 {
    if r_p > adaptive.mu_balance * r_d {
        rho * adaptive.tau
    } else if r_d > adaptive.mu_balance * r_p {
        rho / adaptive.tau
    } else {
        rho
    }
}

/// Runs ADMM until the stopping test passes or `max_iter` sweeps.
pub fn solve(problem: &Problem, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_observed(problem, cfg, Execution::default(), &mut Silent)
}

pub fn solve_with(problem: &Problem, cfg: &SolverConfig, exec: Execution) -> Result<SolveResult> {
    solve_observed(problem, cfg, exec, &mut Silent)
}

pub fn solve_observed(
    problem: &Problem,
    cfg: &SolverConfig,
    exec: Execution,
    observer: &mut dyn Observer,
) -> Result<SolveResult> {
    cfg.validate()?;
    let mut state = AdmmState::initial(problem, cfg)?;
    let mut converged = false;
    while state.iter < cfg.max_iter {
        state.z_prev.copy_from_slice(&state.z);
        state.theta_prev.copy_from_slice(&state.theta);

        update_zx(&mut state, problem, exec)?;
        observer.observe(Phase::ZxUpdated, &state);
        update_theta(&mut state, problem, exec)?;
        observer.observe(Phase::ThetaUpdated, &state);
        update_theta0(&mut state, &problem.tying)?;
        observer.observe(Phase::Theta0Updated, &state);
        update_duals(&mut state, problem);
        observer.observe(Phase::DualsUpdated, &state);

        let check = stopping_test(&state, problem, cfg);
        state.iter += 1;
        state.history.push(IterationRecord {
            iter: state.iter,
            r_p: check.r_p,
            r_d: check.r_d,
            eps_p: check.eps_p,
            eps_d: check.eps_d,
            rho: state.rho,
        });
        if check.stop {
            converged = true;
        } else if cfg.adaptive.enabled {
            state.rho = adapt_rho(state.rho, check.r_p, check.r_d, &cfg.adaptive);
        }
        observer.observe(Phase::IterationEnd, &state);
        if converged {
            break;
        }
    }
    if !converged {
        log::debug!("ADMM stopped at max_iter = {} without meeting tolerances", cfg.max_iter);
    }
    Ok(SolveResult::from_state(state, converged))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapt_rho_balances_residuals() {
        let a = AdaptiveRho { enabled: true, mu_balance: 10.0, tau: 2.0 };
        assert_eq!(adapt_rho(1.0, 1.0, 1.0, &a), 1.0);
        assert_eq!(adapt_rho(1.0, 100.0, 1.0, &a), 2.0);
        assert_eq!(adapt_rho(1.0, 1.0, 100.0, &a), 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { rho0: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            adaptive: AdaptiveRho { enabled: true, mu_balance: 1.0, tau: 2.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: SolverConfig = serde_json::from_str(r#"{"eps_rel": 0.1, "eps_abs": 1e-4}"#).unwrap();
        assert_eq!(cfg.eps_rel, 0.1);
        assert_eq!(cfg.rho0, 1.0);
        assert_eq!(cfg.max_iter, 5000);
        assert!(!cfg.adaptive.enabled);
    }
}
