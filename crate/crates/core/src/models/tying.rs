use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NetidError, Result};

/// Incidence map `θ = E θ₀`. Each node parameter is tied to at most one
/// global parameter, so `EᵀE = diag(d₀)` with `d₀(j)` the out-degree of `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TyingMap {
    global_dim: usize,
    /// `ties[i][k] = Some(j)` when component `k` of `θᵢ` equals `θ₀[j]`.
    ties: Vec<Vec<Option<usize>>>,
    out_degrees: Vec<usize>,
    offsets: Vec<usize>,
}

impl TyingMap {
    /// Builds the map from per-node edge sets `(j, k)`: component `k` of `θᵢ`
    /// tied to component `j` of `θ₀` (0-based).
    pub fn new(global_dim: usize, param_dims: &[usize], edges: &[Vec<(usize, usize)>]) -> Result<Self> {
        if edges.len() != param_dims.len() {
            return Err(NetidError::DimensionMismatch(format!(
                "{} edge sets for {} nodes",
                edges.len(),
                param_dims.len()
            )));
        }
        let mut ties: Vec<Vec<Option<usize>>> = param_dims.iter().map(|&q| vec![None; q]).collect();
        let mut out_degrees = vec![0; global_dim];
        for (i, node_edges) in edges.iter().enumerate() {
            for &(j, k) in node_edges {
                if j >= global_dim || k >= param_dims[i] {
                    return Err(NetidError::DimensionMismatch(format!(
                        "edge ({j}, {k}) of node {i} outside {global_dim} x {}",
                        param_dims[i]
                    )));
                }
                if ties[i][k].replace(j).is_some() {
                    return Err(NetidError::Config(format!(
                        "component {k} of node {i} is tied twice"
                    )));
                }
                out_degrees[j] += 1;
            }
        }
        let mut offsets = vec![0];
        for &q in param_dims {
            offsets.push(offsets.last().unwrap() + q);
        }
        Ok(Self { global_dim, ties, out_degrees, offsets })
    }

    /// `E = I`: every node parameter is its own global parameter.
    pub fn identity(param_dims: &[usize]) -> Self {
        let mut next = 0;
        let edges: Vec<Vec<(usize, usize)>> = param_dims
            .iter()
            .map(|&q| {
                let e = (0..q).map(|k| (next + k, k)).collect();
                next += q;
                e
            })
            .collect();
        Self::new(next, param_dims, &edges).expect("identity edges are valid")
    }

    /// Global parameter count `r`.
    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    /// Total node parameter count `q = Σ qᵢ`.
    pub fn param_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn node_count(&self) -> usize {
        self.ties.len()
    }

    pub fn node_param_dim(&self, i: usize) -> usize {
        self.ties[i].len()
    }

    pub fn node_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn out_degrees(&self) -> &[usize] {
        &self.out_degrees
    }

    pub fn ties(&self, i: usize) -> &[Option<usize>] {
        &self.ties[i]
    }

    /// Edge set `{(j, k)}` of node `i`.
    pub fn edges(&self, i: usize) -> Vec<(usize, usize)> {
        self.ties[i].iter().enumerate().filter_map(|(k, j)| j.map(|j| (j, k))).collect()
    }

    /// Sorted global indices node `i` depends on.
    pub fn node_globals(&self, i: usize) -> Vec<usize> {
        let mut g: Vec<usize> = self.ties[i].iter().flatten().copied().collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Fails with [`NetidError::ZeroDegree`] unless `E` has full column rank.
    pub fn check_full_rank(&self) -> Result<()> {
        match self.out_degrees.iter().position(|&d| d == 0) {
            Some(j) => Err(NetidError::ZeroDegree(j)),
            None => Ok(()),
        }
    }

    /// `θ̄ᵢ = Eᵢ θ₀`.
    pub fn gather(&self, i: usize, theta0: &[f64]) -> Vec<f64> {
        self.ties[i].iter().map(|j| j.map_or(0.0, |j| theta0[j])).collect()
    }

    /// `E θ₀`.
    pub fn expand(&self, theta0: &[f64]) -> Vec<f64> {
        (0..self.node_count()).flat_map(|i| self.gather(i, theta0)).collect()
    }

    /// `Eᵀ θ`.
    pub fn transpose_apply(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.global_dim];
        for (i, node) in self.ties.iter().enumerate() {
            for (k, j) in node.iter().enumerate() {
                if let Some(j) = j {
                    out[*j] += theta[self.offsets[i] + k];
                }
            }
        }
        out
    }

    /// Dense `q × r` matrix `E`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.param_dim(), self.global_dim);
        for (i, node) in self.ties.iter().enumerate() {
            for (k, j) in node.iter().enumerate() {
                if let Some(j) = j {
                    e[(self.offsets[i] + k, *j)] = 1.0;
                }
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_has_unit_degrees() {
        let e = TyingMap::identity(&[4, 4, 4]);
        assert_eq!(e.global_dim(), 12);
        assert_eq!(e.out_degrees(), &[1; 12]);
        let d = e.to_dense();
        assert_eq!(d.transpose() * &d, DMatrix::identity(12, 12));
        // 1-based (5,1)..(8,4) for node 2
        assert_eq!(e.edges(1), vec![(4, 0), (5, 1), (6, 2), (7, 3)]);
    }

    #[test]
    fn double_tie_and_zero_degree_are_errors() {
        assert!(TyingMap::new(2, &[2], &[vec![(0, 0), (1, 0)]]).is_err());
        let e = TyingMap::new(2, &[2], &[vec![(0, 0), (0, 1)]]).unwrap();
        assert!(matches!(e.check_full_rank(), Err(NetidError::ZeroDegree(1))));
    }

    #[test]
    fn expand_and_transpose_match_dense() {
        let e = TyingMap::new(3, &[2, 3], &[vec![(0, 0), (2, 1)], vec![(1, 0), (2, 2)]]).unwrap();
        let d = e.to_dense();
        let th0 = [1.0, -2.0, 0.5];
        let dense = &d * nalgebra::DVector::from_column_slice(&th0);
        assert_eq!(e.expand(&th0), dense.iter().copied().collect::<Vec<_>>());
        let th = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dense_t = d.transpose() * nalgebra::DVector::from_column_slice(&th);
        assert_eq!(e.transpose_apply(&th), dense_t.iter().copied().collect::<Vec<_>>());
        assert_eq!(e.gather(1, &th0), vec![-2.0, 0.0, 0.5]);
    }
}
