//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "family": "pde_chain", "M": 15, "boundary": "mirrored",
//!   "simulation": { "N": 100, "noise_std": 1.0, "seed": 0 },
//!   "solver": { "eps_rel": 0.1, "eps_abs": 1e-4, "rho0": 1000.0 },
//!   "init": { "mode": "truth", "perturb_std": 0.1 },
//!   "repetitions": 10
//! }
//! ```
//!
//! `"family": "custom"` takes a topology in the 1-based JSON form of
//! [`TopologyFile`], one model per node and an optional tying map (identity
//! when absent).

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::admm::SolverConfig;
use crate::error::{NetidError, Result};
use crate::exec::Execution;
use crate::models::families::{self, PdeBoundary};
use crate::models::{InputTerm, NodeModel, TyingMap};
use crate::problem::Problem;
use crate::simulate::{rng_for, simulate, SimConfig, SimulationOutput, INIT_STREAM};
use crate::topology::{measured_stack, NetworkTopology, TopologyFile};

fn default_arx_nodes() -> usize {
    3
}

fn default_order() -> usize {
    2
}

fn default_pde_nodes() -> usize {
    15
}

fn default_sign() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyConfig {
    ArxLoop {
        #[serde(rename = "M", default = "default_arx_nodes")]
        node_count: usize,
        #[serde(default = "default_order")]
        na: usize,
        #[serde(default = "default_order")]
        nb: usize,
    },
    PdeChain {
        #[serde(rename = "M", default = "default_pde_nodes")]
        node_count: usize,
        #[serde(default)]
        boundary: PdeBoundary,
    },
    Custom {
        topology: TopologyFile,
        models: Vec<ModelEntry>,
        #[serde(default)]
        tying: Option<TyingEntry>,
    },
}

/// One node of a custom network: `na` output lags and a list of
/// `(channel, lag)` input terms, channels 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub na: usize,
    pub input_terms: Vec<[usize; 2]>,
    #[serde(default = "default_sign")]
    pub input_sign: f64,
}

/// Tying map of a custom network: per node, the `(j, k)` pairs tying
/// component `k` of `θᵢ` to component `j` of `θ₀`, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TyingEntry {
    pub global_dim: usize,
    pub edges: Vec<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(rename = "N")]
    pub n_samples: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Zero,
    Truth,
    Fixed,
}

/// Initial `θ₀`: zeros, the truth, or a given vector, plus an optional
/// Gaussian perturbation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub mode: InitMode,
    pub perturb_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub family: FamilyConfig,
    /// True `θ₀`; the family default when absent (required for `custom`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub execution: Execution,
}

fn default_reps() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.solver.validate()?;
        if cfg.init.perturb_std < 0.0 {
            return Err(NetidError::Config(format!("perturb_std {} is negative", cfg.init.perturb_std)));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Seed of repetition `rep`.
    pub fn seed(&self, rep: usize) -> u64 {
        self.simulation.seed + rep as u64
    }

    pub fn build(&self) -> Result<Setup> {
        let (topology, models, tying, default_truth) = match &self.family {
            FamilyConfig::ArxLoop { node_count, na, nb } => {
                let topology = families::arx_loop_topology(*node_count)?;
                let models = families::arx_loop_models(*node_count, *na, *nb)?;
                let dims: Vec<usize> = models.iter().map(NodeModel::param_dim).collect();
                let truth = (*na == 2 && *nb == 2)
                    .then(|| families::ARX_TRUTH.repeat(*node_count));
                (topology, models, families::build_tying_arx(&dims), truth)
            }
            FamilyConfig::PdeChain { node_count, boundary } => (
                families::pde_chain_topology(*node_count)?,
                families::pde_chain_models(*node_count)?,
                families::build_tying_pde_with(*node_count, *boundary)?,
                Some(families::PDE_TRUTH.to_vec()),
            ),
            FamilyConfig::Custom { topology, models, tying } => {
                let topology = NetworkTopology::from_file(topology)?;
                let models = custom_models(&topology, models)?;
                let dims: Vec<usize> = models.iter().map(NodeModel::param_dim).collect();
                let tying = match tying {
                    None => TyingMap::identity(&dims),
                    Some(desc) => custom_tying(desc, &dims)?,
                };
                (topology, models, tying, None)
            }
        };
        let truth = self
            .truth
            .clone()
            .or(default_truth)
            .ok_or_else(|| NetidError::Config("\"truth\" is required for this family".into()))?;
        if truth.len() != tying.global_dim() {
            return Err(NetidError::Config(format!(
                "truth has length {}, expected {}",
                truth.len(),
                tying.global_dim()
            )));
        }
        if let Some(v) = &self.init.value {
            if v.len() != tying.global_dim() {
                return Err(NetidError::Config(format!(
                    "init value has length {}, expected {}",
                    v.len(),
                    tying.global_dim()
                )));
            }
        }
        tying.check_full_rank()?;
        Ok(Setup { topology, models, tying, truth })
    }
}

fn custom_models(topo: &NetworkTopology, entries: &[ModelEntry]) -> Result<Vec<NodeModel>> {
    if entries.len() != topo.node_count() {
        return Err(NetidError::Config(format!(
            "{} models for {} nodes",
            entries.len(),
            topo.node_count()
        )));
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let terms = s
                .input_terms
                .iter()
                .map(|&[c, lag]| {
                    if c == 0 {
                        Err(NetidError::Config(format!("node {}: input channels are 1-based", i + 1)))
                    } else {
                        Ok(InputTerm { channel: c - 1, lag })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            NodeModel::new(i, s.na, topo.input_dims()[i], terms, s.input_sign)
        })
        .collect()
}

fn custom_tying(desc: &TyingEntry, dims: &[usize]) -> Result<TyingMap> {
    let edges = desc
        .edges
        .iter()
        .map(|node| {
            node.iter()
                .map(|&[j, k]| {
                    if j == 0 || k == 0 {
                        Err(NetidError::Config("tying edges are 1-based".into()))
                    } else {
                        Ok((j - 1, k - 1))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    TyingMap::new(desc.global_dim, dims, &edges)
}

/// Assembled network, models, tying map and true `θ₀` of a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: NetworkTopology,
    pub models: Vec<NodeModel>,
    pub tying: TyingMap,
    pub truth: Vec<f64>,
}

impl Setup {
    /// True per-node parameters `θᵢ = Eᵢ θ₀`.
    pub fn node_truth(&self) -> Vec<Vec<f64>> {
        (0..self.models.len()).map(|i| self.tying.gather(i, &self.truth)).collect()
    }

    pub fn simulate(&self, sim: &SimulationConfig, seed: u64) -> Result<SimulationOutput> {
        let cfg = SimConfig { n_samples: sim.n_samples, noise_std: sim.noise_std, seed };
        simulate(&self.topology, &self.models, &self.node_truth(), &cfg)
    }

    /// Identification problem for measured data `(y₀, u₀)`.
    pub fn problem(&self, y0: &[f64], u0: &[f64], n_samples: usize) -> Result<Problem> {
        let inputs = self.topology.external_inputs();
        let outputs = self.topology.measured_outputs();
        if y0.len() != outputs * n_samples || u0.len() != inputs * n_samples {
            return Err(NetidError::DimensionMismatch(format!(
                "data has {} output and {} input samples, expected {} and {}",
                y0.len(),
                u0.len(),
                outputs * n_samples,
                inputs * n_samples
            )));
        }
        let mut z0 = y0.to_vec();
        z0.extend_from_slice(u0);
        Problem::new(self.topology.clone(), self.models.clone(), self.tying.clone(), &z0, n_samples)
    }

    pub fn problem_from_simulation(&self, out: &SimulationOutput) -> Result<Problem> {
        let z0 = measured_stack(&self.topology, &out.y, &out.u0, out.n_samples);
        Problem::new(self.topology.clone(), self.models.clone(), self.tying.clone(), &z0, out.n_samples)
    }

    /// Initial `θ₀` for the repetition with the given seed.
    pub fn initial_theta0(&self, init: &InitConfig, seed: u64) -> Vec<f64> {
        let base = match init.mode {
            InitMode::Zero => vec![0.0; self.truth.len()],
            InitMode::Truth => self.truth.clone(),
            InitMode::Fixed => init.value.clone().unwrap_or_else(|| vec![0.0; self.truth.len()]),
        };
        init_strategy(&base, init.perturb_std, seed)
    }
}

/// `base + perturb_std · N(0, I)` drawn from the initial-guess stream of `seed`.
pub fn init_strategy(base: &[f64], perturb_std: f64, seed: u64) -> Vec<f64> {
    if perturb_std == 0.0 {
        return base.to_vec();
    }
    let mut rng = rng_for(seed, INIT_STREAM);
    base.iter().map(|v| v + perturb_std * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arx_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"family": "arx_loop", "simulation": {"N": 300}}"#).unwrap();
        let setup = cfg.build().unwrap();
        assert_eq!(setup.truth.len(), 12);
        assert_eq!(setup.initial_theta0(&cfg.init, 4), vec![0.0; 12]);
        assert_eq!(cfg.simulation.noise_std, 1.0);
        assert_eq!(cfg.repetitions, 1);
    }

    #[test]
    fn pde_with_boundary_and_init() {
        let text = r#"{"family": "pde_chain", "M": 5, "boundary": "mirrored",
            "simulation": {"N": 50, "seed": 3},
            "init": {"mode": "truth", "perturb_std": 0.1}, "repetitions": 4}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.family, FamilyConfig::PdeChain { node_count: 5, boundary: PdeBoundary::Mirrored });
        let setup = cfg.build().unwrap();
        let a = setup.initial_theta0(&cfg.init, cfg.seed(2));
        assert_eq!(a, setup.initial_theta0(&cfg.init, 5));
        assert_ne!(a, setup.truth);
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_perturbation_returns_base() {
        assert_eq!(init_strategy(&[1.0, 2.0], 0.0, 9), vec![1.0, 2.0]);
    }

    #[test]
    fn custom_family_needs_truth() {
        let text = r#"{"family": "custom",
            "topology": {"M": 2, "m": [1, 1], "p": [1, 1], "gamma": [[2, 1]], "b_matrix": [[1, 1]], "c_rows": [1, 2]},
            "models": [{"na": 1, "input_terms": [[1, 1]]}, {"na": 1, "input_terms": [[1, 1]]}],
            "simulation": {"N": 40}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(cfg.build(), Err(NetidError::Config(_))));
        let mut cfg = cfg;
        cfg.truth = Some(vec![0.5, 1.0, -0.3, 0.8]);
        let setup = cfg.build().unwrap();
        assert_eq!(setup.tying.global_dim(), 4);
        let out = setup.simulate(&cfg.simulation, 1).unwrap();
        let p = setup.problem_from_simulation(&out).unwrap();
        assert_eq!(p.form.hidden_count(), 0);
    }

    #[test]
    fn bad_lengths_are_config_errors() {
        let text = r#"{"family": "pde_chain", "M": 5, "truth": [1.0], "simulation": {"N": 50}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(cfg.build(), Err(NetidError::Config(_))));
        let text = r#"{"family": "pde_chain", "M": 4, "simulation": {"N": 50}}"#;
        assert!(matches!(ExperimentConfig::from_json(text).unwrap().build(), Err(NetidError::BadM(4))));
    }
}
