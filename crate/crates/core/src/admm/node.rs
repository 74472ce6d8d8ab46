//! Per-node pieces of one ADMM sweep. The centralized solver and the
//! distributed workers call exactly these routines, and both combine their
//! outputs in ascending node order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::banded::BandCholesky;
use crate::error::{NetidError, Result};
use crate::models::{NodeModel, SignalOperator, TyingMap};
use crate::problem::NodeCoupling;
use crate::signal::{deinterleave, interleave, norm_sq};

/// Factored `Kᵢ = 2TᵢᵀTᵢ + ρI` for the current `θᵢ` and `ρ`.
#[derive(Debug, Clone)]
pub struct NodeSystem<'a> {
    coupling: &'a NodeCoupling,
    op: SignalOperator,
    factor: BandCholesky,
    /// Factor of `ρI + 2TᵢTᵢᵀ`.
    outer: BandCholesky,
    rho: f64,
    d: usize,
    n: usize,
    /// Per local hidden column: `(local signal, value)`.
    columns: Vec<Vec<(usize, f64)>>,
}

/// `(Ãᵢ ⊗ I)ᵀ Xᵢ (Ãᵢ ⊗ I)` restricted to the node's hidden columns, and
/// `(Ãᵢ ⊗ I)ᵀ Xᵢ rᵢ`, with `Xᵢ = I - ρ Kᵢ⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurContribution {
    pub hidden: Vec<usize>,
    /// Dense row-major block of size `(|hidden| N)²`, hidden-major.
    pub block: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl<'a> NodeSystem<'a> {
    pub fn new(
        model: &NodeModel,
        coupling: &'a NodeCoupling,
        theta: &[f64],
        rho: f64,
        n_samples: usize,
    ) -> Result<Self> {
        let op = model.build_t(theta, n_samples)?;
        let d = op.n_signals();
        // ρ > 0 keeps Kᵢ positive definite; a failed pivot means ρ collapsed.
        let factor = op.gram_band(rho).cholesky(0.0).map_err(|k| {
            NetidError::DimensionMismatch(format!(
                "node {}: 2TᵀT + ρI not positive definite at pivot {k} (ρ = {rho})",
                model.node
            ))
        })?;
        let outer = op.outer_band(rho).cholesky(0.0).map_err(|k| {
            NetidError::DimensionMismatch(format!(
                "node {}: ρI + 2TTᵀ not positive definite at pivot {k} (ρ = {rho})",
                model.node
            ))
        })?;
        let columns = (0..coupling.hidden.len())
            .map(|jj| {
                coupling
                    .rows
                    .iter()
                    .enumerate()
                    .flat_map(|(s, row)| row.iter().filter(|e| e.0 == jj).map(move |e| (s, e.1)))
                    .collect()
            })
            .collect();
        Ok(Self { coupling, op, factor, outer, rho, d, n: n_samples, columns })
    }

    pub fn operator(&self) -> &SignalOperator {
        &self.op
    }

    /// `Kᵢ⁻¹ v` for a signal-major `v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut w = interleave(v, self.d, self.n);
        self.factor.solve_in_place(&mut w);
        deinterleave(&w, self.d, self.n)
    }

    /// Uses `Xᵢ = 2Tᵢᵀ(ρI + 2TᵢTᵢᵀ)⁻¹Tᵢ`, so the block is `2WᵀW` with
    /// `W = L⁻¹ Tᵢ Gᵢ` and `LLᵀ = ρI + 2TᵢTᵢᵀ`, an `N × N` band.
    pub fn schur_contribution(&self, r: &[f64]) -> SchurContribution {
        let n = self.n;
        let nj = self.coupling.hidden.len();
        let dim = nj * n;
        let mut w = DMatrix::zeros(n, dim);
        for (jj, cols) in self.columns.iter().enumerate() {
            for t in 0..n {
                let col = jj * n + t;
                for &(s, v) in cols {
                    for term in self.op.terms().iter().filter(|term| term.signal == s) {
                        if t + term.lag < n {
                            w[(t + term.lag, col)] += v * term.coeff;
                        }
                    }
                }
                self.outer.forward_in_place_from(w.column_mut(col).as_mut_slice(), t);
            }
        }
        let mut tr = self.op.apply(r);
        self.outer.forward_in_place_from(&mut tr, 0);
        let rhs = (w.tr_mul(&DVector::from_vec(tr)) * 2.0).data.into();
        // 2WᵀW is symmetric, so its column-major storage is also row-major.
        let block = (w.transpose() * &w * 2.0).data.into();
        SchurContribution { hidden: self.coupling.hidden.clone(), block, rhs }
    }

    /// Solves `Kᵢ zᵢ = ρ (Ãᵢ ⊗ I) x - rᵢ`; `x_local` holds the node's hidden
    /// columns of `x`, hidden-major.
    pub fn solve_z(&self, x_local: &[f64], r: &[f64]) -> Vec<f64> {
        let (d, n) = (self.d, self.n);
        let mut v: Vec<f64> = r.iter().map(|&ri| -ri).collect();
        let ax = local_apply_a(self.coupling, x_local, n);
        for (vi, ai) in v.iter_mut().zip(&ax) {
            *vi += self.rho * ai;
        }
        let mut w = interleave(&v, d, n);
        self.factor.solve_in_place(&mut w);
        deinterleave(&w, d, n)
    }
}

/// `(Ãᵢ ⊗ I) x_local`, signal-major over the node's signals.
pub fn local_apply_a(coupling: &NodeCoupling, x_local: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(x_local.len(), coupling.hidden.len() * n);
    let mut out = vec![0.0; coupling.rows.len() * n];
    for (s, row) in coupling.rows.iter().enumerate() {
        for &(jj, v) in row {
            for t in 0..n {
                out[s * n + t] += v * x_local[jj * n + t];
            }
        }
    }
    out
}

/// `(Ãᵢ ⊗ I)ᵀ v` for a signal-major node vector `v`.
pub fn local_apply_at(coupling: &NodeCoupling, v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; coupling.hidden.len() * n];
    for (s, row) in coupling.rows.iter().enumerate() {
        for &(jj, w) in row {
            for t in 0..n {
                out[jj * n + t] += w * v[s * n + t];
            }
        }
    }
    out
}

/// `rᵢ = λᵢ - ρ bᵢ`.
pub fn shifted_dual(lambda: &[f64], b: &[f64], rho: f64) -> Vec<f64> {
    lambda.iter().zip(b).map(|(l, b)| l - rho * b).collect()
}

/// `λᵢ += ρ(zᵢ - (Ãᵢ ⊗ I)x - bᵢ)` and `μᵢ += ρ(θᵢ - θ̄ᵢ)`.
#[allow(clippy::too_many_arguments)]
pub fn dual_update(
    coupling: &NodeCoupling,
    x_local: &[f64],
    z: &[f64],
    b: &[f64],
    theta: &[f64],
    theta_bar: &[f64],
    rho: f64,
    lambda: &mut [f64],
    mu: &mut [f64],
) {
    let n = z.len() / coupling.rows.len();
    let ax = local_apply_a(coupling, x_local, n);
    for (((l, z), a), b) in lambda.iter_mut().zip(z).zip(&ax).zip(b) {
        *l += rho * (z - a - b);
    }
    for ((m, t), tb) in mu.iter_mut().zip(theta).zip(theta_bar) {
        *m += rho * (t - tb);
    }
}

/// Gathers the node's hidden columns out of a full `x`.
pub fn gather_x(coupling: &NodeCoupling, x: &[f64], n: usize) -> Vec<f64> {
    coupling.hidden.iter().flat_map(|&j| x[j * n..(j + 1) * n].iter().copied()).collect()
}

/// Solves `(2ΦᵢᵀΦᵢ + ρI) θᵢ = ρ θ̄ᵢ - μᵢ - 2Φᵢᵀ yᵢ` with `Φᵢ` built from `zᵢ`.
///
/// Posed as the stacked least-squares problem
/// `min ‖[√2 Φᵢ; √ρ I] θ - [-√2 yᵢ; √ρ θ̄ᵢ - μᵢ/√ρ]‖` and solved by QR, so the
/// conditioning of `Φᵢ` is not squared.
pub fn theta_update(
    model: &NodeModel,
    z: &[f64],
    n: usize,
    theta_bar: &[f64],
    mu: &[f64],
    rho: f64,
) -> Result<Vec<f64>> {
    let phi = model.build_regressor(&z[..n], &z[n..])?;
    let q = model.param_dim();
    let (s2, sr) = (2f64.sqrt(), rho.sqrt());
    let mut stacked = DMatrix::zeros(n + q, q);
    stacked.view_mut((0, 0), (n, q)).copy_from(&(phi * s2));
    let mut rhs = DVector::zeros(n + q);
    for k in 0..n {
        rhs[k] = -s2 * z[k];
    }
    for k in 0..q {
        stacked[(n + k, k)] = sr;
        rhs[n + k] = sr * theta_bar[k] - mu[k] / sr;
    }
    let qr = stacked.qr();
    let qtb = qr.q().transpose() * rhs;
    let theta = qr.r().solve_upper_triangular(&qtb).ok_or_else(|| {
        NetidError::DimensionMismatch(format!("node {}: θ least-squares system is rank deficient", model.node))
    })?;
    Ok(theta.iter().copied().collect())
}

/// Partial sums of `θᵢ` per tied global component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaContribution {
    /// `(j, Σ_{(j,k) ∈ ℰᵢ} θᵢₖ, local degree d₀,ᵢ(j))`, ascending `j`.
    pub sums: Vec<(usize, f64, usize)>,
}

pub fn theta_contribution(tying: &TyingMap, i: usize, theta_i: &[f64]) -> ThetaContribution {
    ThetaContribution { sums: tied_sums(tying, i, theta_i) }
}

fn tied_sums(tying: &TyingMap, i: usize, v: &[f64]) -> Vec<(usize, f64, usize)> {
    let mut sums: Vec<(usize, f64, usize)> = Vec::new();
    for (k, j) in tying.ties(i).iter().enumerate() {
        if let Some(j) = *j {
            match sums.iter_mut().find(|e| e.0 == j) {
                Some(e) => {
                    e.1 += v[k];
                    e.2 += 1;
                }
                None => sums.push((j, v[k], 1)),
            }
        }
    }
    sums.sort_by_key(|e| e.0);
    sums
}

/// `θ₀ⱼ = (1/d₀(j)) Σ θᵢₖ` from the node contributions, summed in order.
pub fn reduce_theta0(global_dim: usize, contributions: &[ThetaContribution]) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; global_dim];
    let mut degree = vec![0usize; global_dim];
    for c in contributions {
        for &(j, s, d) in &c.sums {
            sum[j] += s;
            degree[j] += d;
        }
    }
    if let Some(j) = degree.iter().position(|&d| d == 0) {
        return Err(NetidError::ZeroDegree(j));
    }
    Ok(sum.iter().zip(&degree).map(|(s, &d)| s / d as f64).collect())
}

/// Squared-norm pieces and projected vectors one node needs to report for
/// the stopping test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualContribution {
    pub primal_z_sq: f64,
    pub primal_theta_sq: f64,
    pub ax_sq: f64,
    pub e_theta0_sq: f64,
    pub z_sq: f64,
    pub theta_sq: f64,
    pub b_sq: f64,
    /// `(Ãᵢ ⊗ I)ᵀ (z_prev,i - zᵢ)` over the node's hidden columns.
    pub at_dz: Vec<f64>,
    /// `(Ãᵢ ⊗ I)ᵀ λᵢ` over the node's hidden columns.
    pub at_lambda: Vec<f64>,
    /// Tied sums of `θ_prev,i - θᵢ`.
    pub et_dtheta: Vec<(usize, f64, usize)>,
    /// Tied sums of `μᵢ`.
    pub et_mu: Vec<(usize, f64, usize)>,
}

/// Local iterates of one node at the end of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct NodeIterates<'s> {
    pub z: &'s [f64],
    pub z_prev: &'s [f64],
    pub ax: &'s [f64],
    pub b: &'s [f64],
    pub lambda: &'s [f64],
    pub theta: &'s [f64],
    pub theta_prev: &'s [f64],
    pub theta_bar: &'s [f64],
    pub mu: &'s [f64],
}

pub fn residual_contribution(
    coupling: &NodeCoupling,
    tying: &TyingMap,
    i: usize,
    n: usize,
    it: &NodeIterates<'_>,
) -> ResidualContribution {
    let primal_z: Vec<f64> =
        it.z.iter().zip(it.ax).zip(it.b).map(|((z, a), b)| z - a - b).collect();
    let primal_theta: Vec<f64> = it.theta.iter().zip(it.theta_bar).map(|(t, b)| t - b).collect();
    let dz: Vec<f64> = it.z_prev.iter().zip(it.z).map(|(p, z)| p - z).collect();
    let dtheta: Vec<f64> = it.theta_prev.iter().zip(it.theta).map(|(p, t)| p - t).collect();
    ResidualContribution {
        primal_z_sq: norm_sq(&primal_z),
        primal_theta_sq: norm_sq(&primal_theta),
        ax_sq: norm_sq(it.ax),
        e_theta0_sq: norm_sq(it.theta_bar),
        z_sq: norm_sq(it.z),
        theta_sq: norm_sq(it.theta),
        b_sq: norm_sq(it.b),
        at_dz: local_apply_at(coupling, &dz, n),
        at_lambda: local_apply_at(coupling, it.lambda, n),
        et_dtheta: tied_sums(tying, i, &dtheta),
        et_mu: tied_sums(tying, i, it.mu),
    }
}
