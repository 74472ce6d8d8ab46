//! Symmetric positive-definite banded matrices and their Cholesky factors.
//!
//! Storage is row-major over the lower band: row `i` holds columns
//! `i - w ..= i` in a contiguous slot, so both the factorization dot products
//! and the column-oriented back substitution walk contiguous memory.

use crate::signal::dot;

/// Lower band of a symmetric matrix with half-bandwidth `w`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, w: usize) -> Self {
        let w = w.min(n.saturating_sub(1));
        Self { n, w, data: vec![0.0; n * (w + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.w
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.w);
        i * (self.w + 1) + (j + self.w - i)
    }

    /// Reads entry `(i, j)`; positions outside the band read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.w {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`. Panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.w, "entry ({i}, {j}) outside bandwidth {}", self.w);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.w);
            let row = &self.data[self.idx(i, j0)..=self.idx(i, i)];
            for (j, &a) in (j0..=i).zip(row) {
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    ///
    /// Fails with the offending pivot index when a pivot drops below
    /// `rel_tol` times the largest diagonal entry of `A`.
    pub fn cholesky(mut self, rel_tol: f64) -> Result<BandCholesky, usize> {
        let (n, w) = (self.n, self.w);
        let max_diag = (0..n).map(|i| self.data[self.idx(i, i)].abs()).fold(0.0, f64::max);
        let floor = rel_tol * max_diag;
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                // Overlap of the stored ranges of rows i and j, restricted to k < j.
                let k0 = j0.max(j.saturating_sub(w));
                let mut s = self.data[self.idx(i, j)];
                if k0 < j {
                    let ri = self.idx(i, k0);
                    let rj = self.idx(j, k0);
                    let len = j - k0;
                    let (a, b) = (&self.data[ri..ri + len], &self.data[rj..rj + len]);
                    s -= dot(a, b);
                }
                let k = self.idx(i, j);
                if i == j {
                    if s.is_nan() || s <= floor || !s.is_finite() {
                        return Err(i);
                    }
                    self.data[k] = s.sqrt();
                } else {
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(BandCholesky { l: self })
    }
}

/// Cholesky factor of a [`SymBand`] matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Solves `L y = b` in place when `b[..first]` is known to be zero.
    pub fn forward_in_place_from(&self, b: &mut [f64], first: usize) {
        let l = &self.l;
        let (n, w) = (l.n, l.w);
        assert_eq!(b.len(), n);
        for i in first..n {
            let j0 = i.saturating_sub(w).max(first);
            let mut s = b[i];
            if j0 < i {
                let r = l.idx(i, j0);
                s -= dot(&l.data[r..r + (i - j0)], &b[j0..i]);
            }
            b[i] = s / l.data[l.idx(i, i)];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let (n, w) = (l.n, l.w);
        assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            let xi = b[i] / l.data[l.idx(i, i)];
            b[i] = xi;
            let j0 = i.saturating_sub(w);
            if j0 < i {
                let r = l.idx(i, j0);
                for (bj, a) in b[j0..i].iter_mut().zip(&l.data[r..r + (i - j0)]) {
                    *bj -= a * xi;
                }
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place_from(b, 0);
        self.backward_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn random_band(n: usize, w: usize, seed: u64) -> (SymBand, DMatrix<f64>) {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut band = SymBand::zeros(n, w);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(band.bandwidth())..i {
                let v = next();
                band.add(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
            let d = 2.0 * (band.bandwidth() as f64 + 1.0) + next();
            band.add(i, i, d);
            dense[(i, i)] = d;
        }
        (band, dense)
    }

    proptest! {
        #[test]
        fn solve_matches_dense(n in 1usize..40, w in 0usize..12, seed in any::<u64>()) {
            let (band, dense) = random_band(n, w, seed);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let expected = dense.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
            let f = band.clone().cholesky(1e-14).unwrap();
            let x = f.solve(&b);
            for i in 0..n {
                prop_assert!((x[i] - expected[i]).abs() < 1e-10);
            }
            let ax = band.mul_vec(&x);
            for i in 0..n {
                prop_assert!((ax[i] - b[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn solve_from_skips_leading_zeros(n in 2usize..30, w in 0usize..6, first in 0usize..30, seed in any::<u64>()) {
            let first = first % n;
            let (band, _) = random_band(n, w, seed);
            let f = band.cholesky(1e-14).unwrap();
            let mut b = vec![0.0; n];
            for v in b.iter_mut().skip(first) { *v = 1.0; }
            let full = f.solve(&b);
            f.forward_in_place_from(&mut b, first);
            f.backward_in_place(&mut b);
            for i in 0..n {
                prop_assert!((full[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let mut a = SymBand::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        assert_eq!(a.cholesky(1e-12).unwrap_err(), 1);
    }
}
