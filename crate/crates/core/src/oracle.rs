//! Dense reference computations used to cross-check the structured solver.
//!
//! Everything here materializes the full matrices (`A = Ã ⊗ I_N`, block
//! diagonal `T`, dense `E`) and uses generic dense factorizations, so it
//! shares no code path with the banded/Schur implementation beyond building
//! `Tᵢ(θᵢ)` entrywise. Intended for small instances only.

use nalgebra::{DMatrix, DVector};

use crate::admm::{AdmmState, StopCheck};
use crate::error::{NetidError, Result};
use crate::problem::Problem;

fn kron_identity(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows() * n, m.ncols() * n);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            if v != 0.0 {
                for k in 0..n {
                    out[(r * n + k, c * n + k)] = v;
                }
            }
        }
    }
    out
}

/// Full `A` (`(m+p)N × nN`).
pub fn dense_a(problem: &Problem) -> DMatrix<f64> {
    kron_identity(&problem.form.a_tilde().to_dense(), problem.n_samples())
}

/// Block-diagonal `T(θ)` (`MN × (m+p)N`).
pub fn dense_t(problem: &Problem, theta: &[f64]) -> DMatrix<f64> {
    let n = problem.n_samples();
    let m = problem.node_count();
    let mut t = DMatrix::zeros(m * n, problem.form.z_len());
    for i in 0..m {
        let ti = problem.models[i]
            .build_t(&theta[problem.tying.node_range(i)], n)
            .expect("valid theta")
            .to_dense();
        let cols = problem.form.node_range(i);
        t.view_mut((i * n, cols.start), (n, cols.len())).copy_from(&ti);
    }
    t
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// The joint `(z, x)` stationarity system:
///
/// ```text
/// [ 2TᵀT + ρI   -ρA  ] [z]   [ -(λ - ρb)  ]
/// [   -ρAᵀ    ρAᵀA ] [x] = [ Aᵀ(λ - ρb) ]
/// ```
pub fn dense_kkt(problem: &Problem, state: &AdmmState) -> (DMatrix<f64>, DVector<f64>) {
    let a = dense_a(problem);
    let t = dense_t(problem, &state.theta);
    let rho = state.rho;
    let (nz, nx) = (a.nrows(), a.ncols());
    let mut kkt = DMatrix::zeros(nz + nx, nz + nx);
    kkt.view_mut((0, 0), (nz, nz))
        .copy_from(&(t.transpose() * &t * 2.0 + DMatrix::identity(nz, nz) * rho));
    kkt.view_mut((0, nz), (nz, nx)).copy_from(&(&a * -rho));
    kkt.view_mut((nz, 0), (nx, nz)).copy_from(&(a.transpose() * -rho));
    kkt.view_mut((nz, nz), (nx, nx)).copy_from(&(a.transpose() * &a * rho));
    let r = dv(&state.lambda) - dv(problem.form.b()) * rho;
    let mut rhs = DVector::zeros(nz + nx);
    rhs.rows_mut(0, nz).copy_from(&(-&r));
    rhs.rows_mut(nz, nx).copy_from(&(a.transpose() * &r));
    (kkt, rhs)
}

/// Solves [`dense_kkt`] by LU.
pub fn dense_zx(problem: &Problem, state: &AdmmState) -> Result<(Vec<f64>, Vec<f64>)> {
    let nz = problem.form.z_len();
    let (kkt, rhs) = dense_kkt(problem, state);
    let sol = kkt.lu().solve(&rhs).ok_or(NetidError::SingularSchur { pivot: 0 })?;
    Ok((sol.rows(0, nz).iter().copied().collect(), sol.rows(nz, sol.len() - nz).iter().copied().collect()))
}

/// `(∂L/∂z, ∂L/∂x)` at the state.
pub fn grad_zx(problem: &Problem, state: &AdmmState) -> (Vec<f64>, Vec<f64>) {
    let a = dense_a(problem);
    let t = dense_t(problem, &state.theta);
    let z = dv(&state.z);
    let res = &z - &a * dv(&state.x) - dv(problem.form.b());
    let lam = dv(&state.lambda);
    let gz = t.transpose() * (&t * &z) * 2.0 + &lam + &res * state.rho;
    let gx = -(a.transpose() * (&lam + &res * state.rho));
    (gz.iter().copied().collect(), gx.iter().copied().collect())
}

/// Regressor of node `i` by exact differencing of the affine map `θᵢ ↦ Tᵢ(θᵢ) zᵢ`.
pub fn differenced_regressor(problem: &Problem, i: usize, z_i: &[f64]) -> DMatrix<f64> {
    let n = problem.n_samples();
    let model = &problem.models[i];
    let q = model.param_dim();
    let base = model.build_t(&vec![0.0; q], n).expect("dims").to_dense() * dv(z_i);
    let mut phi = DMatrix::zeros(n, q);
    for k in 0..q {
        let mut e = vec![0.0; q];
        e[k] = 1.0;
        let col = model.build_t(&e, n).expect("dims").to_dense() * dv(z_i) - &base;
        phi.set_column(k, &col);
    }
    phi
}

/// `∂L/∂θ` at the state.
pub fn grad_theta(problem: &Problem, state: &AdmmState) -> Vec<f64> {
    let tying = &problem.tying;
    let e_theta0 = tying.expand(&state.theta0);
    let mut g = Vec::with_capacity(state.theta.len());
    for i in 0..problem.node_count() {
        let z_i = &state.z[problem.form.node_range(i)];
        let tr = tying.node_range(i);
        let th = dv(&state.theta[tr.clone()]);
        let phi = differenced_regressor(problem, i, z_i);
        let t = problem.models[i].build_t(th.as_slice(), problem.n_samples()).expect("dims").to_dense();
        let e = t * dv(z_i);
        let gi = phi.transpose() * e * 2.0 + dv(&state.mu[tr.clone()])
            + (th - dv(&e_theta0[tr])) * state.rho;
        g.extend(gi.iter());
    }
    g
}

/// `θ₀ = (EᵀE)⁻¹ Eᵀ θ` by a dense normal-equation solve.
pub fn dense_theta0(problem: &Problem, theta: &[f64]) -> Option<Vec<f64>> {
    let e = problem.tying.to_dense();
    let ete = e.transpose() * &e;
    let rhs = e.transpose() * dv(theta);
    Some(ete.lu().solve(&rhs)?.iter().copied().collect())
}

/// Per-node least squares `min ‖Φᵢ θᵢ + yᵢ‖²` on the pinned signals `z = b`.
/// Only meaningful when every output is measured (`n = 0`).
pub fn nodewise_ols(problem: &Problem) -> Vec<Vec<f64>> {
    (0..problem.node_count())
        .map(|i| {
            let b_i = problem.form.node_b(i);
            let n = problem.n_samples();
            let phi = differenced_regressor(problem, i, b_i);
            let y = dv(&b_i[..n]);
            let lhs = phi.transpose() * &phi;
            let rhs = -(phi.transpose() * y);
            lhs.lu().solve(&rhs).expect("regressor has full column rank").iter().copied().collect()
        })
        .collect()
}

/// Stopping-test quantities computed with dense `A` and `E`.
pub fn dense_stopping(
    problem: &Problem,
    state: &AdmmState,
    eps_abs: f64,
    eps_rel: f64,
) -> StopCheck {
    let a = dense_a(problem);
    let e = problem.tying.to_dense();
    let ax = &a * dv(&state.x);
    let e0 = &e * dv(&state.theta0);
    let z = dv(&state.z);
    let th = dv(&state.theta);
    let b = dv(problem.form.b());
    let cat = |p: &DVector<f64>, q: &DVector<f64>| (p.norm_squared() + q.norm_squared()).sqrt();
    let r_p = cat(&(&z - &ax - &b), &(&th - &e0));
    let r_d = state.rho
        * cat(
            &(a.transpose() * (dv(&state.z_prev) - &z)),
            &(e.transpose() * (dv(&state.theta_prev) - &th)),
        );
    let eps_p = ((z.len() + th.len()) as f64).sqrt() * eps_abs
        + eps_rel * cat(&ax, &e0).max(cat(&z, &th)).max(b.norm());
    let eps_d = ((a.ncols() + e.ncols()) as f64).sqrt() * eps_abs
        + eps_rel * cat(&(a.transpose() * dv(&state.lambda)), &(e.transpose() * dv(&state.mu)));
    StopCheck { stop: r_p <= eps_p && r_d <= eps_d, r_p, r_d, eps_p, eps_d }
}
