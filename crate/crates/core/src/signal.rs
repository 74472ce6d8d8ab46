//! Signal-stack helpers. A stack of `k` scalar signals over `N` samples is a
//! flat vector with signal `s` at `s*N..(s+1)*N`.

use crate::sparse::SparseMatrix;

/// Applies the lower shift `Sˢ` with zero initial conditions:
/// `out[k] = v[k - s]` for `k >= s`, zero before.
pub fn shift(v: &[f64], s: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    if s < n {
        out[s..].copy_from_slice(&v[..n - s]);
    }
    out
}

/// `(M ⊗ I_N) v` for a sparse `M` acting on a signal stack.
pub fn lift_apply(m: &SparseMatrix, v: &[f64], n_samples: usize) -> Vec<f64> {
    assert_eq!(v.len(), m.cols() * n_samples);
    let mut out = vec![0.0; m.rows() * n_samples];
    for &(r, c, w) in m.entries() {
        let (dst, src) = (r * n_samples, c * n_samples);
        for k in 0..n_samples {
            out[dst + k] += w * v[src + k];
        }
    }
    out
}

/// Reorders a signal-major block of `d` signals into time-major order
/// (`(k, s) ↦ k d + s`).
pub fn interleave(v: &[f64], d: usize, n_samples: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for s in 0..d {
        for k in 0..n_samples {
            out[k * d + s] = v[s * n_samples + k];
        }
    }
    out
}

/// Inverse of [`interleave`].
pub fn deinterleave(v: &[f64], d: usize, n_samples: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for s in 0..d {
        for k in 0..n_samples {
            out[s * n_samples + k] = v[k * d + s];
        }
    }
    out
}

/// Inner product with four independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}
