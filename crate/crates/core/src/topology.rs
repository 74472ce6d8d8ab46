//! Interconnection structure and its reduction to the standard form
//! `z = A x + b`, where `z` stacks every node's `(yᵢ, uᵢ)` and `x` holds the
//! unmeasured node outputs.
//!
//! Every scalar signal occupies a contiguous block of `N` samples, so the
//! lifted matrix is `A = Ã ⊗ I_N`. Only the compact factor `Ã` is stored.

use serde::{Deserialize, Serialize};

use crate::error::{NetidError, Result};
use crate::sparse::SparseMatrix;

/// Interconnection of `M` subsystems: `u(k) = Γ y(k) + B u₀(k)`, `y₀(k) = C y(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    m0: usize,
    gamma: SparseMatrix,
    b: SparseMatrix,
    c: SparseMatrix,
}

impl NetworkTopology {
    pub fn new(
        input_dims: Vec<usize>,
        output_dims: Vec<usize>,
        m0: usize,
        gamma: SparseMatrix,
        b: SparseMatrix,
        c: SparseMatrix,
    ) -> Result<Self> {
        if input_dims.len() != output_dims.len() || input_dims.is_empty() {
            return Err(NetidError::DimensionMismatch(format!(
                "{} input dims vs {} output dims",
                input_dims.len(),
                output_dims.len()
            )));
        }
        let m: usize = input_dims.iter().sum();
        let p: usize = output_dims.iter().sum();
        let shape = |name: &str, s: &SparseMatrix, r: usize, c: usize| {
            if s.rows() != r || s.cols() != c {
                Err(NetidError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    s.rows(),
                    s.cols()
                )))
            } else {
                Ok(())
            }
        };
        shape("Gamma", &gamma, m, p)?;
        shape("B", &b, m, m0)?;
        shape("C", &c, c.rows(), p)?;

        // Entries are signed incidences; the ARX ring feeds back with -1.
        for &(r, col, v) in gamma.entries().iter().chain(b.entries()) {
            if v.abs() != 1.0 {
                return Err(NetidError::InvalidTopology(format!(
                    "[Gamma B] entry ({r}, {col}) = {v} is not 0 or ±1"
                )));
            }
        }
        let mut covered = vec![false; m];
        for &(r, _, _) in gamma.entries().iter().chain(b.entries()) {
            covered[r] = true;
        }
        if let Some(r) = covered.iter().position(|&c| !c) {
            return Err(NetidError::InvalidTopology(format!("row {r} of [Gamma B] is empty")));
        }
        find_output_split(&c)?;
        Ok(Self { input_dims, output_dims, m0, gamma, b, c })
    }

    pub fn node_count(&self) -> usize {
        self.input_dims.len()
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn total_inputs(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn total_outputs(&self) -> usize {
        self.output_dims.iter().sum()
    }

    pub fn external_inputs(&self) -> usize {
        self.m0
    }

    pub fn measured_outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn gamma(&self) -> &SparseMatrix {
        &self.gamma
    }

    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }

    pub fn c(&self) -> &SparseMatrix {
        &self.c
    }

    /// Offset of node `i`'s first output in the stacked `y`.
    pub fn output_offset(&self, i: usize) -> usize {
        self.output_dims[..i].iter().sum()
    }

    /// Offset of node `i`'s first input in the stacked `u`.
    pub fn input_offset(&self, i: usize) -> usize {
        self.input_dims[..i].iter().sum()
    }

    /// Node owning global output index `g`.
    pub fn output_owner(&self, g: usize) -> usize {
        let mut acc = 0;
        for (i, &p) in self.output_dims.iter().enumerate() {
            acc += p;
            if g < acc {
                return i;
            }
        }
        panic!("output index {g} out of range")
    }

    pub fn from_file(desc: &TopologyFile) -> Result<Self> {
        if desc.m.len() != desc.node_count || desc.p.len() != desc.node_count {
            return Err(NetidError::Config(format!(
                "M = {} but m has {} and p has {} entries",
                desc.node_count,
                desc.m.len(),
                desc.p.len()
            )));
        }
        let m: usize = desc.m.iter().sum();
        let p: usize = desc.p.iter().sum();
        let one_based = |name: &str, e: &Entry| -> Result<(usize, usize, f64)> {
            let (r, c, v) = e.parts();
            if r == 0 || c == 0 {
                return Err(NetidError::Config(format!("{name} indices are 1-based, got ({r}, {c})")));
            }
            Ok((r - 1, c - 1, v))
        };
        let gamma = desc.gamma.iter().map(|e| one_based("gamma", e)).collect::<Result<Vec<_>>>()?;
        let b = desc.b_matrix.iter().map(|e| one_based("b_matrix", e)).collect::<Result<Vec<_>>>()?;
        let m0 = desc.m0.unwrap_or_else(|| b.iter().map(|e| e.1 + 1).max().unwrap_or(0));
        let c = desc
            .c_rows
            .iter()
            .enumerate()
            .map(|(r, &g)| {
                if g == 0 {
                    Err(NetidError::Config("c_rows indices are 1-based".into()))
                } else {
                    Ok((r, g - 1, 1.0))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let c = SparseMatrix::new(desc.c_rows.len(), p, c)?;
        Self::new(
            desc.m.clone(),
            desc.p.clone(),
            m0,
            SparseMatrix::new(m, p, gamma)?,
            SparseMatrix::new(m, m0, b)?,
            c,
        )
    }

    pub fn to_file(&self) -> TopologyFile {
        let entry = |&(r, c, v): &(usize, usize, f64)| {
            if v == 1.0 {
                Entry::Unit([r + 1, c + 1])
            } else {
                Entry::Valued(r + 1, c + 1, v)
            }
        };
        TopologyFile {
            node_count: self.node_count(),
            m: self.input_dims.clone(),
            p: self.output_dims.clone(),
            m0: Some(self.m0),
            gamma: self.gamma.entries().iter().map(entry).collect(),
            b_matrix: self.b.entries().iter().map(entry).collect(),
            c_rows: self.c.entries().iter().map(|e| e.1 + 1).collect(),
        }
    }
}

/// A nonzero of an interconnection matrix in a JSON topology: `[row, col]`
/// for a unit entry or `[row, col, value]` for a signed one. 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Unit([usize; 2]),
    Valued(usize, usize, f64),
}

impl Entry {
    fn parts(&self) -> (usize, usize, f64) {
        match *self {
            Entry::Unit([r, c]) => (r, c, 1.0),
            Entry::Valued(r, c, v) => (r, c, v),
        }
    }
}

/// JSON form of a [`NetworkTopology`]. All indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    #[serde(rename = "M")]
    pub node_count: usize,
    pub m: Vec<usize>,
    pub p: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<usize>,
    pub gamma: Vec<Entry>,
    pub b_matrix: Vec<Entry>,
    pub c_rows: Vec<usize>,
}

/// Column split of the output permutation `P = [P₁ P₂]` with `C P₁ = I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSplit {
    /// Column `r` of `P₁` is the unit vector of output `measured[r]`.
    pub measured: Vec<usize>,
    /// Column `j` of `P₂` is the unit vector of output `hidden[j]`, ascending.
    pub hidden: Vec<usize>,
}

impl OutputSplit {
    pub fn hidden_count(&self) -> usize {
        self.hidden.len()
    }
}

/// Splits the outputs into measured ones (in the row order of `C`) and the
/// remaining hidden ones.
pub fn find_output_split(c: &SparseMatrix) -> Result<OutputSplit> {
    let mut measured = Vec::with_capacity(c.rows());
    let mut seen = vec![false; c.cols()];
    for r in 0..c.rows() {
        let row: Vec<_> = c.row(r).collect();
        match row.as_slice() {
            [(col, v)] if *v == 1.0 => {
                if seen[*col] {
                    return Err(NetidError::NotASelection(format!("output {col} selected twice")));
                }
                seen[*col] = true;
                measured.push(*col);
            }
            _ => {
                return Err(NetidError::NotASelection(format!(
                    "row {r} has {} nonzeros, expected a single 1",
                    row.len()
                )))
            }
        }
    }
    let hidden = (0..c.cols()).filter(|&g| !seen[g]).collect();
    Ok(OutputSplit { measured, hidden })
}

/// Origin of a scalar signal in the per-node stacking `Q z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    /// Global output index.
    Output(usize),
    /// Global input index.
    Input(usize),
}

/// `z = (Ã ⊗ I_N) x + b` for one topology and one measured data record.
#[derive(Debug, Clone)]
pub struct StandardForm {
    n_samples: usize,
    split: OutputSplit,
    /// `Q` as an index vector: signal `s` of `z` is entry `q_index[s]` of the
    /// stacked `(y, u)`.
    q_index: Vec<usize>,
    kinds: Vec<SignalKind>,
    node_signal_offsets: Vec<usize>,
    /// Rows of `Ã = Q Ā`: `(hidden column, value)`.
    a_rows: Vec<Vec<(usize, f64)>>,
    /// Rows of `Q B̄`: `(z₀ signal, value)`; `z₀ = (y₀, u₀)`.
    b_rows: Vec<Vec<(usize, f64)>>,
    z0_signals: usize,
    b: Vec<f64>,
}

impl StandardForm {
    /// Builds the standard form from the topology and the measured stack
    /// `z0 = (y₀, u₀)`, each scalar signal a contiguous block of `n_samples`.
    pub fn build(topo: &NetworkTopology, z0: &[f64], n_samples: usize) -> Result<Self> {
        let p0 = topo.measured_outputs();
        let m0 = topo.external_inputs();
        if z0.len() != (p0 + m0) * n_samples {
            return Err(NetidError::DimensionMismatch(format!(
                "z0 has length {}, expected (p0 + m0) N = ({p0} + {m0}) * {n_samples}",
                z0.len()
            )));
        }
        let split = find_output_split(topo.c())?;
        let p = topo.total_outputs();
        let mut measured_pos = vec![None; p];
        let mut hidden_pos = vec![None; p];
        for (r, &g) in split.measured.iter().enumerate() {
            measured_pos[g] = Some(r);
        }
        for (j, &g) in split.hidden.iter().enumerate() {
            hidden_pos[g] = Some(j);
        }

        let mut q_index = Vec::new();
        let mut kinds = Vec::new();
        let mut node_signal_offsets = Vec::with_capacity(topo.node_count() + 1);
        let mut a_rows = Vec::new();
        let mut b_rows = Vec::new();
        for i in 0..topo.node_count() {
            node_signal_offsets.push(kinds.len());
            let yo = topo.output_offset(i);
            for g in yo..yo + topo.output_dims()[i] {
                q_index.push(g);
                kinds.push(SignalKind::Output(g));
                // y = P₁ y₀ + P₂ x
                match (measured_pos[g], hidden_pos[g]) {
                    (Some(r), _) => {
                        a_rows.push(Vec::new());
                        b_rows.push(vec![(r, 1.0)]);
                    }
                    (None, Some(j)) => {
                        a_rows.push(vec![(j, 1.0)]);
                        b_rows.push(Vec::new());
                    }
                    (None, None) => unreachable!("split covers every output"),
                }
            }
            let uo = topo.input_offset(i);
            for l in uo..uo + topo.input_dims()[i] {
                q_index.push(p + l);
                kinds.push(SignalKind::Input(l));
                // u = Γ̄₁ y₀ + Γ̄₂ x + B u₀
                let mut arow = Vec::new();
                let mut brow = Vec::new();
                for (g, v) in topo.gamma().row(l) {
                    match (measured_pos[g], hidden_pos[g]) {
                        (Some(r), _) => brow.push((r, v)),
                        (None, Some(j)) => arow.push((j, v)),
                        (None, None) => unreachable!(),
                    }
                }
                for (c, v) in topo.b().row(l) {
                    brow.push((p0 + c, v));
                }
                arow.sort_by_key(|e| e.0);
                brow.sort_by_key(|e| e.0);
                a_rows.push(arow);
                b_rows.push(brow);
            }
        }
        node_signal_offsets.push(kinds.len());

        let mut b = vec![0.0; kinds.len() * n_samples];
        for (s, row) in b_rows.iter().enumerate() {
            let dst = &mut b[s * n_samples..(s + 1) * n_samples];
            for &(c, v) in row {
                let src = &z0[c * n_samples..(c + 1) * n_samples];
                for (d, x) in dst.iter_mut().zip(src) {
                    *d += v * x;
                }
            }
        }

        let sf = Self {
            n_samples,
            split,
            q_index,
            kinds,
            node_signal_offsets,
            a_rows,
            b_rows,
            z0_signals: p0 + m0,
            b,
        };
        debug_assert_eq!(sf.a_tilde_rank(), sf.hidden_count());
        Ok(sf)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Number of hidden outputs `n = Σpᵢ − p₀`.
    pub fn hidden_count(&self) -> usize {
        self.split.hidden_count()
    }

    /// Length of `x`: `n N`.
    pub fn x_len(&self) -> usize {
        self.hidden_count() * self.n_samples
    }

    /// Number of scalar signals in `z`: `m + p`.
    pub fn signal_count(&self) -> usize {
        self.kinds.len()
    }

    /// Length of `z`: `(m + p) N`.
    pub fn z_len(&self) -> usize {
        self.kinds.len() * self.n_samples
    }

    pub fn node_count(&self) -> usize {
        self.node_signal_offsets.len() - 1
    }

    pub fn split(&self) -> &OutputSplit {
        &self.split
    }

    pub fn q_index(&self) -> &[usize] {
        &self.q_index
    }

    pub fn signal_kind(&self, s: usize) -> SignalKind {
        self.kinds[s]
    }

    /// Signal range of node `i` inside `z` (in signals, not samples).
    pub fn node_signals(&self, i: usize) -> std::ops::Range<usize> {
        self.node_signal_offsets[i]..self.node_signal_offsets[i + 1]
    }

    /// Sample range of node `i`'s block `zᵢ` inside `z`.
    pub fn node_range(&self, i: usize) -> std::ops::Range<usize> {
        let r = self.node_signals(i);
        r.start * self.n_samples..r.end * self.n_samples
    }

    /// Row `s` of `Ã` as `(hidden column, value)` pairs.
    pub fn a_row(&self, s: usize) -> &[(usize, f64)] {
        &self.a_rows[s]
    }

    /// Sorted hidden columns appearing in node `i`'s rows of `Ã`.
    pub fn node_hidden_columns(&self, i: usize) -> Vec<usize> {
        let mut cols: Vec<usize> =
            self.node_signals(i).flat_map(|s| self.a_rows[s].iter().map(|e| e.0)).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn node_b(&self, i: usize) -> &[f64] {
        &self.b[self.node_range(i)]
    }

    /// `Ã = Q Ā` as a sparse `(m+p) × n` matrix.
    pub fn a_tilde(&self) -> SparseMatrix {
        let entries = self
            .a_rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |&(j, v)| (s, j, v)))
            .collect();
        SparseMatrix::new(self.signal_count(), self.hidden_count(), entries).expect("valid rows")
    }

    /// `Q B̄` as a sparse `(m+p) × (p₀+m₀)` matrix.
    pub fn qb_bar(&self) -> SparseMatrix {
        let entries = self
            .b_rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |&(c, v)| (s, c, v)))
            .collect();
        SparseMatrix::new(self.signal_count(), self.z0_signals, entries).expect("valid rows")
    }

    /// `Ā = [P₂; Γ̄₂]` in the stacked `(y, u)` ordering.
    pub fn a_bar(&self) -> SparseMatrix {
        self.unpermute(&self.a_tilde())
    }

    /// `B̄ = [[P₁, 0]; [Γ̄₁, B]]` in the stacked `(y, u)` ordering.
    pub fn b_bar(&self) -> SparseMatrix {
        self.unpermute(&self.qb_bar())
    }

    fn unpermute(&self, m: &SparseMatrix) -> SparseMatrix {
        let entries = m.entries().iter().map(|&(s, c, v)| (self.q_index[s], c, v)).collect();
        SparseMatrix::new(m.rows(), m.cols(), entries).expect("permutation of valid rows")
    }

    fn a_tilde_rank(&self) -> usize {
        // Every hidden output owns a unit row (its own y-row), so the rank is
        // the number of columns hit by such rows.
        let mut hit = vec![false; self.hidden_count()];
        for (s, row) in self.a_rows.iter().enumerate() {
            if let (SignalKind::Output(_), [(j, v)]) = (self.kinds[s], row.as_slice()) {
                if *v != 0.0 {
                    hit[*j] = true;
                }
            }
        }
        hit.iter().filter(|&&h| h).count()
    }

    /// `A x` with `A = Ã ⊗ I_N`.
    pub fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.x_len());
        let n = self.n_samples;
        let mut out = vec![0.0; self.z_len()];
        for (s, row) in self.a_rows.iter().enumerate() {
            let dst = &mut out[s * n..(s + 1) * n];
            for &(j, v) in row {
                for (d, xv) in dst.iter_mut().zip(&x[j * n..(j + 1) * n]) {
                    *d += v * xv;
                }
            }
        }
        out
    }

    /// `Aᵀ v`.
    pub fn apply_at(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.z_len());
        let n = self.n_samples;
        let mut out = vec![0.0; self.x_len()];
        for (s, row) in self.a_rows.iter().enumerate() {
            let src = &v[s * n..(s + 1) * n];
            for &(j, w) in row {
                for (d, sv) in out[j * n..(j + 1) * n].iter_mut().zip(src) {
                    *d += w * sv;
                }
            }
        }
        out
    }

    /// Full stacked signals `z = A x + b`.
    pub fn reconstruct_signals(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.x_len() {
            return Err(NetidError::DimensionMismatch(format!(
                "x has length {}, expected n N = {}",
                x.len(),
                self.x_len()
            )));
        }
        let mut z = self.apply_a(x);
        for (zi, bi) in z.iter_mut().zip(&self.b) {
            *zi += bi;
        }
        Ok(z)
    }

    /// Splits a full `z` back into the stacked `(y, u)` ordering.
    pub fn unstack(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_samples;
        let p = self.kinds.iter().filter(|k| matches!(k, SignalKind::Output(_))).count();
        let m = self.kinds.len() - p;
        let mut y = vec![0.0; p * n];
        let mut u = vec![0.0; m * n];
        for (s, kind) in self.kinds.iter().enumerate() {
            let src = &z[s * n..(s + 1) * n];
            match *kind {
                SignalKind::Output(g) => y[g * n..(g + 1) * n].copy_from_slice(src),
                SignalKind::Input(l) => u[l * n..(l + 1) * n].copy_from_slice(src),
            }
        }
        (y, u)
    }

    /// Inverse of [`StandardForm::unstack`].
    pub fn stack(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.n_samples;
        let mut z = vec![0.0; self.z_len()];
        for (s, kind) in self.kinds.iter().enumerate() {
            let dst = &mut z[s * n..(s + 1) * n];
            match *kind {
                SignalKind::Output(g) => dst.copy_from_slice(&y[g * n..(g + 1) * n]),
                SignalKind::Input(l) => dst.copy_from_slice(&u[l * n..(l + 1) * n]),
            }
        }
        z
    }

    /// Hidden outputs of a full output stack `y`, i.e. `(P₂ᵀ ⊗ I_N) y`.
    pub fn hidden_from_outputs(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n_samples;
        self.split.hidden.iter().flat_map(|&g| y[g * n..(g + 1) * n].iter().copied()).collect()
    }
}

/// Builds `z₀ = (y₀, u₀)` from a full output stack and the external inputs.
pub fn measured_stack(topo: &NetworkTopology, y: &[f64], u0: &[f64], n_samples: usize) -> Vec<f64> {
    let y0 = crate::signal::lift_apply(topo.c(), y, n_samples);
    let mut z0 = y0;
    z0.extend_from_slice(u0);
    z0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::families;

    #[test]
    fn identity_measurement_has_no_hidden_outputs() {
        let split = find_output_split(&SparseMatrix::identity(2)).unwrap();
        assert_eq!(split.measured, vec![0, 1]);
        assert!(split.hidden.is_empty());
    }

    #[test]
    fn odd_outputs_of_five_leave_two_hidden() {
        let c = SparseMatrix::new(3, 5, vec![(0, 0, 1.0), (1, 2, 1.0), (2, 4, 1.0)]).unwrap();
        let split = find_output_split(&c).unwrap();
        assert_eq!(split.measured, vec![0, 2, 4]);
        // 1-based outputs {2, 4}
        assert_eq!(split.hidden, vec![1, 3]);
    }

    #[test]
    fn non_selection_is_rejected() {
        let two_in_row = SparseMatrix::new(1, 3, vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert!(matches!(find_output_split(&two_in_row), Err(NetidError::NotASelection(_))));
        let repeated = SparseMatrix::new(2, 3, vec![(0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(find_output_split(&repeated), Err(NetidError::NotASelection(_))));
        let empty_row = SparseMatrix::new(2, 3, vec![(0, 1, 1.0)]).unwrap();
        assert!(matches!(find_output_split(&empty_row), Err(NetidError::NotASelection(_))));
        let scaled = SparseMatrix::new(1, 2, vec![(0, 1, 2.0)]).unwrap();
        assert!(matches!(find_output_split(&scaled), Err(NetidError::NotASelection(_))));
    }

    #[test]
    fn topology_validation() {
        let empty_row = NetworkTopology::new(
            vec![1, 1],
            vec![1, 1],
            1,
            SparseMatrix::new(2, 2, vec![(0, 1, 1.0)]).unwrap(),
            SparseMatrix::zeros(2, 1),
            SparseMatrix::identity(2),
        );
        assert!(matches!(empty_row, Err(NetidError::InvalidTopology(_))));
        let non_unit = NetworkTopology::new(
            vec![1],
            vec![1],
            1,
            SparseMatrix::new(1, 1, vec![(0, 0, 0.5)]).unwrap(),
            SparseMatrix::identity(1),
            SparseMatrix::identity(1),
        );
        assert!(matches!(non_unit, Err(NetidError::InvalidTopology(_))));
    }

    #[test]
    fn arx_loop_reduces_to_pinned_signals() {
        let topo = families::arx_loop_topology(3).unwrap();
        let n = 4;
        let z0: Vec<f64> = (0..(3 + 1) * n).map(|v| v as f64).collect();
        let sf = StandardForm::build(&topo, &z0, n).unwrap();
        assert_eq!(sf.hidden_count(), 0);
        assert_eq!(sf.x_len(), 0);
        assert_eq!(sf.a_tilde().nnz(), 0);
        // u₁ = -y₃ + u₀
        let z = sf.reconstruct_signals(&[]).unwrap();
        let u1 = &z[sf.node_range(0)][n..];
        for k in 0..n {
            assert_eq!(u1[k], -z0[2 * n + k] + z0[3 * n + k]);
        }
    }

    #[test]
    fn decoupled_topology_passes_inputs_through() {
        let topo = NetworkTopology::new(
            vec![1, 1],
            vec![1, 1],
            2,
            SparseMatrix::zeros(2, 2),
            SparseMatrix::identity(2),
            SparseMatrix::identity(2),
        )
        .unwrap();
        let n = 3;
        let z0: Vec<f64> = (0..4 * n).map(|v| (v as f64).sin()).collect();
        let sf = StandardForm::build(&topo, &z0, n).unwrap();
        let z = sf.reconstruct_signals(&[]).unwrap();
        assert_eq!(z, sf.b());
        let (y, u) = sf.unstack(&z);
        assert_eq!(y, z0[..2 * n]);
        assert_eq!(u, z0[2 * n..]);
    }

    #[test]
    fn pde_chain_node3_sees_hidden_neighbours() {
        let topo = families::pde_chain_topology(5).unwrap();
        let n = 2;
        let z0 = vec![0.0; (3 + 5) * n];
        let sf = StandardForm::build(&topo, &z0, n).unwrap();
        assert_eq!(sf.hidden_count(), 2);
        // node 3 (index 2): inputs (y1, y2, u0_3, y4, y5); hidden columns 0 ↔ y2, 1 ↔ y4
        let sig = sf.node_signals(2);
        let rows: Vec<Vec<(usize, f64)>> = sig.map(|s| sf.a_row(s).to_vec()).collect();
        assert_eq!(
            rows,
            vec![vec![], vec![], vec![(0, 1.0)], vec![], vec![(1, 1.0)], vec![]]
        );
        assert_eq!(sf.node_hidden_columns(2), vec![0, 1]);
    }

    #[test]
    fn z0_length_is_checked() {
        let topo = families::arx_loop_topology(3).unwrap();
        assert!(matches!(
            StandardForm::build(&topo, &[0.0; 7], 2),
            Err(NetidError::DimensionMismatch(_))
        ));
        let sf = StandardForm::build(&topo, &[0.0; 8], 2).unwrap();
        assert!(sf.reconstruct_signals(&[1.0]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let topo = families::pde_chain_topology(7).unwrap();
        let desc = topo.to_file();
        let json = serde_json::to_string(&desc).unwrap();
        let back: TopologyFile = serde_json::from_str(&json).unwrap();
        assert_eq!(NetworkTopology::from_file(&back).unwrap(), topo);
    }

    #[test]
    fn file_parses_signed_entries() {
        let json = r#"{"M":3,"m":[1,1,1],"p":[1,1,1],"gamma":[[1,3,-1],[2,1],[3,2]],
                       "b_matrix":[[1,1]],"c_rows":[1,2,3]}"#;
        let desc: TopologyFile = serde_json::from_str(json).unwrap();
        let topo = NetworkTopology::from_file(&desc).unwrap();
        assert_eq!(topo, families::arx_loop_topology(3).unwrap());
    }
}
