//! The two worked network families: a feedback ring of ARX models and a
//! chain of nodes from a spatially discretized PDE.

use serde::{Deserialize, Serialize};

use super::{InputTerm, NodeModel, TyingMap};
use crate::error::{NetidError, Result};
use crate::sparse::SparseMatrix;
use crate::topology::NetworkTopology;

/// True per-node parameters `(a₁, a₂, b₁, b₂)` of the ARX loop experiment.
pub const ARX_TRUTH: [f64; 4] = [-1.5, 0.7, -0.1, 0.1];

/// True global parameters `(a₀, b₀)` of the PDE chain experiment.
pub const PDE_TRUTH: [f64; 5] = [0.7, 0.9, 0.5, -0.5, 0.5];

/// Feedback ring of `M` single-input single-output nodes:
/// `u₁ = -y_M + u₀`, `uᵢ = yᵢ₋₁`, every output measured.
pub fn arx_loop_topology(node_count: usize) -> Result<NetworkTopology> {
    if node_count < 2 {
        return Err(NetidError::Config(format!("ARX loop needs at least 2 nodes, got {node_count}")));
    }
    let mut gamma = vec![(0, node_count - 1, -1.0)];
    gamma.extend((1..node_count).map(|i| (i, i - 1, 1.0)));
    NetworkTopology::new(
        vec![1; node_count],
        vec![1; node_count],
        1,
        SparseMatrix::new(node_count, node_count, gamma)?,
        SparseMatrix::new(node_count, 1, vec![(0, 0, 1.0)])?,
        SparseMatrix::identity(node_count),
    )
}

/// ARX nodes `y(k) + Σ aₗ y(k-l) + Σ bₗ u(k-l) = e(k)` with `nb` input lags.
pub fn arx_loop_models(node_count: usize, na: usize, nb: usize) -> Result<Vec<NodeModel>> {
    (0..node_count)
        .map(|i| {
            let terms = (1..=nb).map(|lag| InputTerm { channel: 0, lag }).collect();
            NodeModel::new(i, na, 1, terms, 1.0)
        })
        .collect()
}

/// `E = I` over the stacked node parameters.
pub fn build_tying_arx(param_dims: &[usize]) -> TyingMap {
    TyingMap::identity(param_dims)
}

fn check_pde_count(node_count: usize) -> Result<()> {
    if node_count < 5 || node_count.is_multiple_of(2) {
        Err(NetidError::BadM(node_count))
    } else {
        Ok(())
    }
}

/// Input channels of node `i` (0-based) in the PDE chain: neighbours at
/// distance 1 and 2 with the node's own external input in the middle.
/// `None` marks the external input slot.
fn pde_inputs(i: usize, node_count: usize) -> Vec<Option<usize>> {
    let mut v = Vec::with_capacity(5);
    for offset in [-2i64, -1, 0, 1, 2] {
        let j = i as i64 + offset;
        if offset == 0 {
            v.push(None);
        } else if (0..node_count as i64).contains(&j) {
            v.push(Some(j as usize));
        }
    }
    v
}

/// Chain topology of the discretized PDE with odd `M ≥ 5`: every node has
/// one measured external input, and the odd-numbered (1-based) outputs are
/// measured.
pub fn pde_chain_topology(node_count: usize) -> Result<NetworkTopology> {
    check_pde_count(node_count)?;
    let mut input_dims = Vec::with_capacity(node_count);
    let mut gamma = Vec::new();
    let mut b = Vec::new();
    let mut row = 0;
    for i in 0..node_count {
        let inputs = pde_inputs(i, node_count);
        input_dims.push(inputs.len());
        for src in inputs {
            match src {
                Some(j) => gamma.push((row, j, 1.0)),
                None => b.push((row, i, 1.0)),
            }
            row += 1;
        }
    }
    let measured: Vec<usize> = (0..node_count).step_by(2).collect();
    let c = measured.iter().enumerate().map(|(r, &g)| (r, g, 1.0)).collect();
    NetworkTopology::new(
        input_dims,
        vec![1; node_count],
        node_count,
        SparseMatrix::new(row, node_count, gamma)?,
        SparseMatrix::new(row, node_count, b)?,
        SparseMatrix::new(measured.len(), node_count, c)?,
    )
}

/// PDE chain nodes `y(k) + aᵀ(y(k-1), y(k-2)) = bᵀ u(k-1) + e(k)`.
pub fn pde_chain_models(node_count: usize) -> Result<Vec<NodeModel>> {
    check_pde_count(node_count)?;
    (0..node_count)
        .map(|i| {
            let m = pde_inputs(i, node_count).len();
            let terms = (0..m).map(|channel| InputTerm { channel, lag: 1 }).collect();
            NodeModel::new(i, 2, m, terms, -1.0)
        })
        .collect()
}

/// Input selection of the last chain node.
///
/// `Literal` is `b_M = (b₀₂, b₀₁, b₀₂)`, giving `d₀ = (5, 5, 5, 9, 5)` at
/// `M = 5`. With the true parameters it makes the closed loop unstable
/// (spectral radius about 1.21). `Mirrored` is `b_M = (b₀₃, b₀₂, b₀₁)`, the
/// reflection of `b₁`; the closed loop then has spectral radius `√0.9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeBoundary {
    #[default]
    Literal,
    Mirrored,
}

/// Tying map of the PDE chain, `θ₀ = (a₀₁, a₀₂, b₀₁, b₀₂, b₀₃)`, with the
/// literal boundary selection.
///
/// `aᵢ = a₀` everywhere; the input coefficients follow the stencil
/// `b₁ = b₀`, `b₂ = (b₀₂, b₀₁, b₀₂, b₀₃)`, `bᵢ = (b₀₃, b₀₂, b₀₁, b₀₂, b₀₃)`,
/// `b_{M-1} = (b₀₃, b₀₂, b₀₁, b₀₂)` and `b_M = (b₀₂, b₀₁, b₀₂)`.
pub fn build_tying_pde(node_count: usize) -> Result<TyingMap> {
    build_tying_pde_with(node_count, PdeBoundary::Literal)
}

pub fn build_tying_pde_with(node_count: usize, boundary: PdeBoundary) -> Result<TyingMap> {
    check_pde_count(node_count)?;
    let (b1, b2, b3) = (2, 3, 4);
    let mut dims = Vec::with_capacity(node_count);
    let mut edges = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let b_map: Vec<usize> = match i {
            0 => vec![b1, b2, b3],
            1 => vec![b2, b1, b2, b3],
            _ if i == node_count - 2 => vec![b3, b2, b1, b2],
            _ if i == node_count - 1 => match boundary {
                PdeBoundary::Literal => vec![b2, b1, b2],
                PdeBoundary::Mirrored => vec![b3, b2, b1],
            },
            _ => vec![b3, b2, b1, b2, b3],
        };
        let mut e = vec![(0, 0), (1, 1)];
        e.extend(b_map.iter().enumerate().map(|(k, &j)| (j, 2 + k)));
        dims.push(2 + b_map.len());
        edges.push(e);
    }
    TyingMap::new(5, &dims, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn arx_loop_matches_the_feedback_wiring() {
        let topo = arx_loop_topology(3).unwrap();
        let g = topo.gamma().to_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., -1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(g, expected);
        assert_eq!(topo.b().to_dense(), DMatrix::from_row_slice(3, 1, &[1., 0., 0.]));
        assert_eq!(topo.c().to_dense(), DMatrix::identity(3, 3));
    }

    #[test]
    fn pde_counts_are_validated() {
        for bad in [3, 4, 6] {
            assert!(matches!(build_tying_pde(bad), Err(NetidError::BadM(_))));
            assert!(matches!(pde_chain_topology(bad), Err(NetidError::BadM(_))));
        }
    }

    #[test]
    fn pde_m5_dimensions() {
        let e = build_tying_pde(5).unwrap();
        assert_eq!(e.param_dim(), 29);
        assert_eq!(e.global_dim(), 5);
        let topo = pde_chain_topology(5).unwrap();
        assert_eq!(topo.input_dims(), &[3, 4, 5, 4, 3]);
        let models = pde_chain_models(5).unwrap();
        let q: Vec<usize> = models.iter().map(|m| m.param_dim()).collect();
        assert_eq!(q, (0..5).map(|i| e.node_param_dim(i)).collect::<Vec<_>>());
    }

    #[test]
    fn pde_b1_block_is_identity() {
        let e = build_tying_pde(5).unwrap().to_dense();
        let block = e.view((2, 2), (3, 3)).clone_owned();
        assert_eq!(block, DMatrix::identity(3, 3));
        assert_eq!(e.view((0, 0), (2, 2)).clone_owned(), DMatrix::identity(2, 2));
    }

    #[test]
    fn pde_boundary_degrees() {
        let lit = build_tying_pde_with(5, PdeBoundary::Literal).unwrap();
        assert_eq!(lit.out_degrees(), &[5, 5, 5, 9, 5]);
        let mir = build_tying_pde_with(5, PdeBoundary::Mirrored).unwrap();
        assert_eq!(mir.out_degrees(), &[5, 5, 5, 8, 6]);
    }

    #[test]
    fn pde_node_inputs() {
        // node 1: (u0, y2, y3); node 2: (y1, u0, y3, y4); node M: (y_{M-2}, y_{M-1}, u0)
        assert_eq!(pde_inputs(0, 7), vec![None, Some(1), Some(2)]);
        assert_eq!(pde_inputs(1, 7), vec![Some(0), None, Some(2), Some(3)]);
        assert_eq!(pde_inputs(3, 7), vec![Some(1), Some(2), None, Some(4), Some(5)]);
        assert_eq!(pde_inputs(6, 7), vec![Some(4), Some(5), None]);
    }
}
