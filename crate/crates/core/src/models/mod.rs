//! Per-node residual models `eᵢ = Tᵢ(θᵢ) zᵢ = Φᵢ θᵢ + yᵢ` and the parameter
//! tying map `θ = E θ₀`.
//!
//! A node has a scalar output and `mᵢ` input channels. Its residual is
//!
//! ```text
//! e(k) = y(k) + Σₗ aₗ y(k-l) + σ Σₜ bₜ u_{cₜ}(k - lagₜ)
//! ```
//!
//! with `θᵢ = (a₁..a_na, b₁..b_nt)` and a family-wide input sign `σ`
//! (`+1` for the ARX loop, `-1` for the PDE chain, whose model keeps the input
//! on the right-hand side).

pub mod families;
mod tying;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::banded::SymBand;
use crate::error::{NetidError, Result};
use crate::signal::shift;

pub use tying::TyingMap;

/// One input column of the regressor: channel `channel` delayed by `lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputTerm {
    pub channel: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub node: usize,
    /// Autoregressive order.
    pub na: usize,
    pub input_dim: usize,
    pub input_terms: Vec<InputTerm>,
    pub input_sign: f64,
}

impl NodeModel {
    pub fn new(
        node: usize,
        na: usize,
        input_dim: usize,
        input_terms: Vec<InputTerm>,
        input_sign: f64,
    ) -> Result<Self> {
        if let Some(t) = input_terms.iter().find(|t| t.channel >= input_dim) {
            return Err(NetidError::DimensionMismatch(format!(
                "node {node}: input channel {} but only {input_dim} inputs",
                t.channel
            )));
        }
        if input_terms.iter().any(|t| t.lag == 0) {
            return Err(NetidError::Config(format!("node {node}: input lags must be at least 1")));
        }
        for (a, t) in input_terms.iter().enumerate() {
            if input_terms[..a].contains(t) {
                return Err(NetidError::Config(format!(
                    "node {node}: duplicate input term (channel {}, lag {})",
                    t.channel, t.lag
                )));
            }
        }
        if input_sign.abs() != 1.0 {
            return Err(NetidError::Config(format!("node {node}: input sign must be ±1")));
        }
        Ok(Self { node, na, input_dim, input_terms, input_sign })
    }

    /// Parameter dimension `qᵢ`.
    pub fn param_dim(&self) -> usize {
        self.na + self.input_terms.len()
    }

    /// Signals in `zᵢ = (yᵢ, uᵢ)`.
    pub fn signal_dim(&self) -> usize {
        1 + self.input_dim
    }

    pub fn max_lag(&self) -> usize {
        self.input_terms.iter().map(|t| t.lag).max().unwrap_or(0).max(self.na)
    }

    /// Regressor `Φᵢ` (`N × qᵢ`) such that `eᵢ = Φᵢ θᵢ + yᵢ`.
    ///
    /// `u` is the channel-major input stack of length `mᵢ N`.
    pub fn build_regressor(&self, y: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let n = y.len();
        if u.len() != self.input_dim * n {
            return Err(NetidError::DimensionMismatch(format!(
                "node {}: u has length {}, expected {} * {n}",
                self.node,
                u.len(),
                self.input_dim
            )));
        }
        let mut phi = DMatrix::zeros(n, self.param_dim());
        for l in 1..=self.na {
            phi.set_column(l - 1, &nalgebra::DVector::from_vec(shift(y, l)));
        }
        for (t, term) in self.input_terms.iter().enumerate() {
            let ch = &u[term.channel * n..(term.channel + 1) * n];
            let col = shift(ch, term.lag).into_iter().map(|v| self.input_sign * v).collect();
            phi.set_column(self.na + t, &nalgebra::DVector::from_vec(col));
        }
        Ok(phi)
    }

    /// Residual operator `Tᵢ(θᵢ)` over `zᵢ = (yᵢ, uᵢ)` of `n_samples` samples.
    pub fn build_t(&self, theta: &[f64], n_samples: usize) -> Result<SignalOperator> {
        if theta.len() != self.param_dim() {
            return Err(NetidError::DimensionMismatch(format!(
                "node {}: theta has length {}, expected {}",
                self.node,
                theta.len(),
                self.param_dim()
            )));
        }
        let mut terms = Vec::with_capacity(1 + theta.len());
        terms.push(Term { signal: 0, lag: 0, coeff: 1.0 });
        for l in 1..=self.na {
            terms.push(Term { signal: 0, lag: l, coeff: theta[l - 1] });
        }
        for (t, term) in self.input_terms.iter().enumerate() {
            terms.push(Term {
                signal: 1 + term.channel,
                lag: term.lag,
                coeff: self.input_sign * theta[self.na + t],
            });
        }
        Ok(SignalOperator { n_samples, n_signals: self.signal_dim(), terms })
    }
}

/// `coeff · z_signal(k - lag)` contribution to `e(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub signal: usize,
    pub lag: usize,
    pub coeff: f64,
}

/// Sparse causal operator `T: R^{dN} → R^N`, `(T z)(k) = Σ coeff · z_s(k - lag)`,
/// acting on a signal-major `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalOperator {
    n_samples: usize,
    n_signals: usize,
    terms: Vec<Term>,
}

impl SignalOperator {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn max_lag(&self) -> usize {
        self.terms.iter().map(|t| t.lag).max().unwrap_or(0)
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_samples;
        assert_eq!(z.len(), self.n_signals * n);
        let mut e = vec![0.0; n];
        for t in &self.terms {
            let src = &z[t.signal * n..(t.signal + 1) * n];
            for k in t.lag..n {
                e[k] += t.coeff * src[k - t.lag];
            }
        }
        e
    }

    pub fn apply_transpose(&self, e: &[f64]) -> Vec<f64> {
        let n = self.n_samples;
        assert_eq!(e.len(), n);
        let mut z = vec![0.0; self.n_signals * n];
        for t in &self.terms {
            let dst = &mut z[t.signal * n..(t.signal + 1) * n];
            for k in t.lag..n {
                dst[k - t.lag] += t.coeff * e[k];
            }
        }
        z
    }

    /// Dense `N × dN` matrix in the signal-major column order.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_samples;
        let mut m = DMatrix::zeros(n, self.n_signals * n);
        for t in &self.terms {
            for k in t.lag..n {
                m[(k, t.signal * n + k - t.lag)] += t.coeff;
            }
        }
        m
    }

    /// `ρ I + 2 T Tᵀ`, an `N × N` matrix with half-bandwidth equal to the
    /// largest lag.
    pub fn outer_band(&self, rho: f64) -> SymBand {
        let n = self.n_samples;
        let mut g = SymBand::zeros(n, self.max_lag());
        for t1 in &self.terms {
            for t2 in self.terms.iter().filter(|t| t.signal == t1.signal) {
                // row k of T sees sample k - lag₁; row k' = k - lag₁ + lag₂ sees the same one
                for k in t1.lag..n {
                    let k2 = k - t1.lag + t2.lag;
                    if k2 <= k {
                        g.add(k, k2, 2.0 * t1.coeff * t2.coeff);
                    }
                }
            }
        }
        g.add_diagonal(rho);
        g
    }

    /// `2 TᵀT + ρ I` in the time-major (interleaved) ordering `k d + s`.
    pub fn gram_band(&self, rho: f64) -> SymBand {
        let d = self.n_signals;
        let n = self.n_samples;
        let width = d * (self.max_lag() + 1) - 1;
        let mut g = SymBand::zeros(d * n, width);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for k in 0..n {
            row.clear();
            for t in &self.terms {
                if k >= t.lag {
                    row.push(((k - t.lag) * d + t.signal, t.coeff));
                }
            }
            for (a, &(ia, ca)) in row.iter().enumerate() {
                // Distinct terms hit distinct positions for a fixed k, so each
                // off-diagonal pair is visited once and stored once.
                for &(ib, cb) in &row[..a] {
                    g.add(ia, ib, 2.0 * ca * cb);
                }
                g.add(ia, ia, 2.0 * ca * ca);
            }
        }
        g.add_diagonal(rho);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{deinterleave, interleave};
    use proptest::prelude::*;

    fn arx() -> NodeModel {
        families::arx_loop_models(3, 2, 2).unwrap().remove(1)
    }

    fn lcg(seed: u64, len: usize) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn arx_regressor_of_ones() {
        let n = 6;
        let phi = arx().build_regressor(&vec![1.0; n], &vec![1.0; n]).unwrap();
        assert_eq!(phi.ncols(), 4);
        let col: Vec<f64> = phi.column(0).iter().copied().collect();
        assert_eq!(col, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let col: Vec<f64> = phi.column(3).iter().copied().collect();
        assert_eq!(col, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn pde_interior_node_has_seven_parameters() {
        let models = families::pde_chain_models(7).unwrap();
        assert_eq!(models[2].param_dim(), 7);
        assert_eq!(models[0].param_dim(), 5);
        assert_eq!(models[1].param_dim(), 6);
        let n = 5;
        let phi = models[2].build_regressor(&vec![0.0; n], &vec![1.0; 5 * n]).unwrap();
        assert_eq!(phi.ncols(), 7);
        // -Uᵀ with one-step delay
        assert_eq!(phi[(0, 2)], 0.0);
        assert_eq!(phi[(1, 6)], -1.0);
    }

    #[test]
    fn zero_theta_reduces_to_output() {
        let m = arx();
        let n = 7;
        let t = m.build_t(&[0.0; 4], n).unwrap();
        let z = lcg(3, 2 * n);
        assert_eq!(t.apply(&z), z[..n].to_vec());
    }

    #[test]
    fn arx_input_part_is_b1_s_plus_b2_s2() {
        let m = arx();
        let n = 6;
        let t = m.build_t(&[0.0, 0.0, 0.3, -0.2], n).unwrap();
        let dense = t.to_dense();
        for k in 0..n {
            for c in 0..n {
                let expected = if k == c + 1 {
                    0.3
                } else if k == c + 2 {
                    -0.2
                } else {
                    0.0
                };
                assert_eq!(dense[(k, n + c)], expected);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let m = arx();
        assert!(m.build_t(&[0.0; 3], 4).is_err());
        assert!(m.build_regressor(&[0.0; 4], &[0.0; 5]).is_err());
        assert!(NodeModel::new(0, 2, 1, vec![InputTerm { channel: 1, lag: 1 }], 1.0).is_err());
        assert!(NodeModel::new(0, 2, 1, vec![InputTerm { channel: 0, lag: 0 }], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn operator_matches_regressor(seed in any::<u64>(), n in 3usize..30, node in 0usize..7) {
            let models = families::pde_chain_models(7).unwrap();
            for model in [&models[node], &arx()] {
                let theta = lcg(seed, model.param_dim());
                let z = lcg(seed ^ 0xabc, model.signal_dim() * n);
                let t = model.build_t(&theta, n).unwrap();
                let phi = model.build_regressor(&z[..n], &z[n..]).unwrap();
                let via_phi = &phi * nalgebra::DVector::from_column_slice(&theta);
                let e = t.apply(&z);
                for k in 0..n {
                    prop_assert!((e[k] - via_phi[k] - z[k]).abs() < 1e-12);
                }
                let dense = t.to_dense() * nalgebra::DVector::from_column_slice(&z);
                for k in 0..n {
                    prop_assert!((e[k] - dense[k]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn operator_is_affine_in_theta(seed in any::<u64>(), alpha in -2.0f64..2.0) {
            let model = &families::pde_chain_models(5).unwrap()[2];
            let n = 9;
            let th1 = lcg(seed, model.param_dim());
            let th2 = lcg(seed.wrapping_add(1), model.param_dim());
            let mix: Vec<f64> = th1.iter().zip(&th2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let t1 = model.build_t(&th1, n).unwrap().to_dense();
            let t2 = model.build_t(&th2, n).unwrap().to_dense();
            let tm = model.build_t(&mix, n).unwrap().to_dense();
            let expected = t1 * alpha + t2 * (1.0 - alpha);
            prop_assert!((tm - expected).abs().max() < 1e-12);
        }

        #[test]
        fn transpose_and_gram_are_consistent(seed in any::<u64>(), n in 2usize..15, rho in 0.1f64..5.0) {
            let model = &families::pde_chain_models(5).unwrap()[1];
            let t = model.build_t(&lcg(seed, model.param_dim()), n).unwrap();
            let d = model.signal_dim();
            let z = lcg(seed ^ 7, d * n);
            let dense = t.to_dense();
            let expected = (dense.transpose() * &dense * 2.0 + DMatrix::identity(d * n, d * n) * rho)
                * nalgebra::DVector::from_column_slice(&z);
            let band = t.gram_band(rho);
            let got = deinterleave(&band.mul_vec(&interleave(&z, d, n)), d, n);
            for i in 0..d * n {
                prop_assert!((got[i] - expected[i]).abs() < 1e-10);
            }
            let e = lcg(seed ^ 9, n);
            let tt = t.apply_transpose(&e);
            let tt_dense = dense.transpose() * nalgebra::DVector::from_column_slice(&e);
            for i in 0..d * n {
                prop_assert!((tt[i] - tt_dense[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn outer_band_is_t_t_transpose(seed in any::<u64>(), n in 1usize..15, rho in 0.1f64..5.0, node in 0usize..5) {
            let model = &families::pde_chain_models(5).unwrap()[node];
            let t = model.build_t(&lcg(seed, model.param_dim()), n).unwrap();
            let dense = t.to_dense();
            let expected = &dense * dense.transpose() * 2.0 + DMatrix::identity(n, n) * rho;
            let band = t.outer_band(rho);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((band.get(i, j) - expected[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }
}
