//! Minimal row-sorted triplet matrix for the interconnection maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NetidError, Result};

/// Sparse matrix stored as `(row, col, value)` triplets sorted by row then
/// column. Duplicate positions are rejected at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, _, v)| v != 0.0);
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(NetidError::InvalidTopology(format!(
                    "duplicate entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(NetidError::DimensionMismatch(format!(
                "entry ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, entries: (0..n).map(|i| (i, i, 1.0)).collect() }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let start = self.entries.partition_point(|e| e.0 < r);
        self.entries[start..].iter().take_while(move |e| e.0 == r).map(|e| (e.1, e.2))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for &(r, c, w) in &self.entries {
            out[r] += w * v[c];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(SparseMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 1.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn row_iteration_and_dense_agree() {
        let s = SparseMatrix::new(3, 3, vec![(2, 1, 1.0), (0, 2, -1.0), (2, 0, 1.0)]).unwrap();
        assert_eq!(s.row(2).collect::<Vec<_>>(), vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(s.row(1).count(), 0);
        let d = s.to_dense();
        assert_eq!(SparseMatrix::from_dense(&d), s);
        assert_eq!(s.mul_vec(&[1.0, 2.0, 3.0]), vec![-3.0, 0.0, 3.0]);
    }
}
