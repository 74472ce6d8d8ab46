//! Assembled identification problem: topology, standard form for one data
//! record, node models and the tying map.

use crate::error::{NetidError, Result};
use crate::models::{NodeModel, TyingMap};
use crate::topology::{NetworkTopology, StandardForm};

/// Rows of `Ãᵢ` restricted to the hidden columns node `i` actually uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoupling {
    /// Global hidden-output indices (columns of `Ã`) seen by the node, sorted.
    pub hidden: Vec<usize>,
    /// Per local signal of `zᵢ`: `(position in hidden, value)`.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl NodeCoupling {
    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub topology: NetworkTopology,
    pub form: StandardForm,
    pub models: Vec<NodeModel>,
    pub tying: TyingMap,
    couplings: Vec<NodeCoupling>,
}

impl Problem {
    pub fn new(
        topology: NetworkTopology,
        models: Vec<NodeModel>,
        tying: TyingMap,
        z0: &[f64],
        n_samples: usize,
    ) -> Result<Self> {
        let form = StandardForm::build(&topology, z0, n_samples)?;
        Self::from_form(topology, form, models, tying)
    }

    pub fn from_form(
        topology: NetworkTopology,
        form: StandardForm,
        models: Vec<NodeModel>,
        tying: TyingMap,
    ) -> Result<Self> {
        let m = topology.node_count();
        if models.len() != m || tying.node_count() != m {
            return Err(NetidError::DimensionMismatch(format!(
                "{m} nodes, {} models, tying map over {} nodes",
                models.len(),
                tying.node_count()
            )));
        }
        for (i, model) in models.iter().enumerate() {
            if topology.output_dims()[i] != 1 {
                return Err(NetidError::DimensionMismatch(format!(
                    "node {i} has {} outputs; node models are single-output",
                    topology.output_dims()[i]
                )));
            }
            if model.input_dim != topology.input_dims()[i] {
                return Err(NetidError::DimensionMismatch(format!(
                    "node {i}: model has {} inputs, topology {}",
                    model.input_dim,
                    topology.input_dims()[i]
                )));
            }
            if model.param_dim() != tying.node_param_dim(i) {
                return Err(NetidError::DimensionMismatch(format!(
                    "node {i}: model has {} parameters, tying map {}",
                    model.param_dim(),
                    tying.node_param_dim(i)
                )));
            }
        }
        tying.check_full_rank()?;
        let couplings = (0..m)
            .map(|i| {
                let hidden = form.node_hidden_columns(i);
                let rows = form
                    .node_signals(i)
                    .map(|s| {
                        form.a_row(s)
                            .iter()
                            .map(|&(j, v)| (hidden.binary_search(&j).expect("listed column"), v))
                            .collect()
                    })
                    .collect();
                NodeCoupling { hidden, rows }
            })
            .collect();
        Ok(Self { topology, form, models, tying, couplings })
    }

    pub fn node_count(&self) -> usize {
        self.models.len()
    }

    pub fn n_samples(&self) -> usize {
        self.form.n_samples()
    }

    pub fn coupling(&self, i: usize) -> &NodeCoupling {
        &self.couplings[i]
    }

    /// Problem with the same structure over a new measured record.
    pub fn with_data(&self, z0: &[f64]) -> Result<Self> {
        Self::new(self.topology.clone(), self.models.clone(), self.tying.clone(), z0, self.n_samples())
    }
}
