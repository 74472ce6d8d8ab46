//! Closed-loop data generation.
//!
//! Solves `(bdiag T_{y,i} + bdiag T_{u,i} (Γ ⊗ I)) y = -bdiag T_{u,i} (B ⊗ I) u₀ + e`
//! for the true parameters, then forms `u = (Γ ⊗ I) y + (B ⊗ I) u₀` and
//! `y₀ = (C ⊗ I) y`. Input terms carry a delay of at least one sample, so the
//! system is unit lower triangular in time and is eliminated one sample at a
//! time.
//!
//! Random streams come from ChaCha8 seeded with `seed_from_u64(seed)`; inputs
//! use stream 1, noise stream 2 and initial-guess perturbations stream 3.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NetidError, Result};
use crate::models::NodeModel;
use crate::signal::lift_apply;
use crate::topology::NetworkTopology;

pub const INPUT_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;
pub const INIT_STREAM: u64 = 3;

/// Growth of `max|y|` over the excitation level above which the simulated
/// loop is reported as numerically unstable.
const GROWTH_WARNING: f64 = 1e6;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub n_samples: usize,
    /// All node outputs, `Σpᵢ` signals.
    pub y: Vec<f64>,
    /// All node inputs, `Σmᵢ` signals.
    pub u: Vec<f64>,
    pub y0: Vec<f64>,
    pub u0: Vec<f64>,
    pub e: Vec<f64>,
    /// `max|y| / (max|e| + max|u₀|)`.
    pub growth: f64,
}

impl SimulationOutput {
    /// Measured stack `z₀ = (y₀, u₀)`.
    pub fn z0(&self) -> Vec<f64> {
        let mut z0 = self.y0.clone();
        z0.extend_from_slice(&self.u0);
        z0
    }
}

/// Independent equiprobable ±1 samples, `m0` signals of length `n`.
pub fn draw_inputs(seed: u64, n: usize, m0: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, INPUT_STREAM);
    (0..n * m0).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// I.i.d. `N(0, σ²)` samples, `p` signals of length `n`.
pub fn draw_noise(seed: u64, n: usize, p: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n * p];
    }
    let mut rng = rng_for(seed, NOISE_STREAM);
    (0..n * p).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draws inputs and noise from `cfg` and simulates the loop.
pub fn simulate(
    topo: &NetworkTopology,
    models: &[NodeModel],
    theta: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<SimulationOutput> {
    if cfg.noise_std < 0.0 {
        return Err(NetidError::Config(format!("noise_std {} is negative", cfg.noise_std)));
    }
    let max_lag = models.iter().map(NodeModel::max_lag).max().unwrap_or(0);
    if cfg.n_samples < max_lag + 1 {
        return Err(NetidError::Config(format!(
            "N = {} is shorter than the largest lag + 1 = {}",
            cfg.n_samples,
            max_lag + 1
        )));
    }
    let u0 = draw_inputs(cfg.seed, cfg.n_samples, topo.external_inputs());
    let e = draw_noise(cfg.seed, cfg.n_samples, topo.total_outputs(), cfg.noise_std);
    simulate_with(topo, models, theta, u0, e, cfg.n_samples)
}

/// Simulates the loop for given external inputs and equation errors.
pub fn simulate_with(
    topo: &NetworkTopology,
    models: &[NodeModel],
    theta: &[Vec<f64>],
    u0: Vec<f64>,
    e: Vec<f64>,
    n_samples: usize,
) -> Result<SimulationOutput> {
    let n = n_samples;
    let m_nodes = topo.node_count();
    if models.len() != m_nodes || theta.len() != m_nodes {
        return Err(NetidError::DimensionMismatch(format!(
            "{} nodes, {} models, {} parameter vectors",
            m_nodes,
            models.len(),
            theta.len()
        )));
    }
    let p = topo.total_outputs();
    let m = topo.total_inputs();
    if u0.len() != topo.external_inputs() * n || e.len() != p * n {
        return Err(NetidError::DimensionMismatch("u0 or e length".into()));
    }
    if topo.output_dims().iter().any(|&d| d != 1) {
        return Err(NetidError::DimensionMismatch("simulator supports scalar node outputs".into()));
    }
    let ops = models
        .iter()
        .zip(theta)
        .map(|(model, th)| model.build_t(th, n))
        .collect::<Result<Vec<_>>>()?;

    let bu0 = lift_apply(topo.b(), &u0, n);
    let mut y = vec![0.0; p * n];
    let mut u = vec![0.0; m * n];
    let mut yk = vec![0.0; p];
    for k in 0..n {
        for (i, op) in ops.iter().enumerate() {
            let uo = topo.input_offset(i);
            let mut acc = e[i * n + k];
            for t in op.terms() {
                if t.lag > k {
                    continue;
                }
                let kk = k - t.lag;
                if t.signal == 0 {
                    if t.lag > 0 {
                        acc -= t.coeff * y[i * n + kk];
                    }
                } else {
                    acc -= t.coeff * u[(uo + t.signal - 1) * n + kk];
                }
            }
            if !acc.is_finite() {
                return Err(NetidError::SingularLoop(k));
            }
            yk[i] = acc;
        }
        for g in 0..p {
            y[g * n + k] = yk[g];
        }
        for l in 0..m {
            u[l * n + k] = bu0[l * n + k];
        }
        for &(l, g, v) in topo.gamma().entries() {
            u[l * n + k] += v * yk[g];
        }
    }

    let y0 = lift_apply(topo.c(), &y, n);
    let amax = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let excitation = amax(&e) + amax(&u0);
    let growth = if excitation > 0.0 { amax(&y) / excitation } else { 0.0 };
    if !growth.is_finite() || growth > GROWTH_WARNING {
        log::warn!("closed loop looks unstable: max|y| is {growth:.3e} times the excitation");
    }
    Ok(SimulationOutput { n_samples: n, y, u, y0, u0, e, growth })
}
