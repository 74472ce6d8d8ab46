use crate::banded::SymBand;
use crate::error::{NetidError, Result};

use super::node::SchurContribution;

/// Relative pivot floor below which the hidden-signal system is declared
/// singular.
const SCHUR_PIVOT_TOL: f64 = 1e-12;

/// Assembles `S = AᵀXA` (hidden-major, `j N + t`) from node contributions in
/// the given order and solves `ρ S x = AᵀX r`.
///
/// Nodes only couple the hidden outputs they see, so `S` is block banded;
/// the band is sized from the widest hidden-index span of any node.
pub fn solve_schur(
    hidden_count: usize,
    n: usize,
    contributions: &[SchurContribution],
    rho: f64,
) -> Result<Vec<f64>> {
    let span = contributions
        .iter()
        .filter_map(|c| Some(c.hidden.last()? - c.hidden.first()?))
        .max()
        .unwrap_or(0);
    let dim = hidden_count * n;
    let mut s = SymBand::zeros(dim, (span + 1) * n - 1);
    let mut rhs = vec![0.0; dim];
    for c in contributions {
        let local = c.hidden.len() * n;
        for (a, &ja) in c.hidden.iter().enumerate() {
            for t in 0..n {
                let row = a * n + t;
                let ga = ja * n + t;
                rhs[ga] += c.rhs[row];
                for (b, &jb) in c.hidden.iter().enumerate() {
                    for t2 in 0..n {
                        let gb = jb * n + t2;
                        if gb <= ga {
                            s.add(ga, gb, c.block[row * local + b * n + t2]);
                        }
                    }
                }
            }
        }
    }
    let factor = s.cholesky(SCHUR_PIVOT_TOL).map_err(|pivot| NetidError::SingularSchur { pivot })?;
    let mut x = rhs;
    factor.solve_in_place(&mut x);
    for v in &mut x {
        *v /= rho;
    }
    Ok(x)
}
