//! Sparsity and parameter-sharing patterns for the disturbance-feedback gain.
//!
//! Block row `t` of `Φ_u` produces `u_t`; block column 0 multiplies `x_0`
//! and block column `j ≥ 1` multiplies `w_{j-1}`. Causality allows block
//! `(t, j)` to be nonzero only when `j ≤ t`.
//!
//! The Toeplitz pattern ties every block on a block diagonal `t - j` to one
//! shared block, which mimics a time-invariant controller. When `n == p` the
//! `x_0` column is treated as one more disturbance block and joins the
//! diagonals; otherwise each `x_0` block keeps its own variables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lifted::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyStructure {
    #[serde(alias = "full-causal")]
    Full,
    #[serde(alias = "block-toeplitz-causal")]
    Toeplitz,
}

impl std::fmt::Display for PolicyStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyStructure::Full => "full",
            PolicyStructure::Toeplitz => "toeplitz",
        })
    }
}

impl std::str::FromStr for PolicyStructure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full-causal" => Ok(Self::Full),
            "toeplitz" | "block-toeplitz-causal" => Ok(Self::Toeplitz),
            other => Err(format!("unknown structure `{other}` (expected full|toeplitz)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum TieKey {
    /// Shared block on block diagonal `t - j`, entry `(i, k)` within the block.
    Diagonal { diag: usize, i: usize, k: usize },
    /// Untied `x_0` block at row block `t`.
    Initial { t: usize, i: usize, k: usize },
    /// Single free entry.
    Entry { row: usize, col: usize },
}

/// Map from free scalar variables to the entries of `Φ_u` they fill.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    dims: Dims,
    structure: PolicyStructure,
    entries: Vec<Vec<(usize, usize)>>,
    index: Vec<Option<usize>>,
}

impl VariableLayout {
    pub fn new(dims: Dims, structure: PolicyStructure) -> Self {
        let (rows, cols) = (dims.u_dim(), dims.w_dim());
        let mut groups: BTreeMap<TieKey, Vec<(usize, usize)>> = BTreeMap::new();
        for col in 0..cols {
            let (j, k) = column_block(&dims, col);
            for row in 0..rows {
                let (t, i) = (row / dims.m, row % dims.m);
                if j > t {
                    continue;
                }
                let key = match structure {
                    PolicyStructure::Full => TieKey::Entry { row, col },
                    PolicyStructure::Toeplitz if j == 0 && dims.n != dims.p => TieKey::Initial { t, i, k },
                    PolicyStructure::Toeplitz => TieKey::Diagonal { diag: t - j, i, k },
                };
                groups.entry(key).or_default().push((row, col));
            }
        }
        let entries: Vec<_> = groups.into_values().collect();
        let mut index = vec![None; rows * cols];
        for (v, es) in entries.iter().enumerate() {
            for &(r, c) in es {
                index[r + c * rows] = Some(v);
            }
        }
        Self {
            dims,
            structure,
            entries,
            index,
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn structure(&self) -> PolicyStructure {
        self.structure
    }

    pub fn num_free(&self) -> usize {
        self.entries.len()
    }

    /// Entries of `Φ_u` driven by variable `v`.
    pub fn entries(&self, v: usize) -> &[(usize, usize)] {
        &self.entries[v]
    }

    pub fn variable_at(&self, row: usize, col: usize) -> Option<usize> {
        self.index[row + col * self.dims.u_dim()]
    }

    pub fn assemble(&self, vars: &[f64]) -> DMatrix<f64> {
        assert_eq!(vars.len(), self.num_free());
        let mut phi = DMatrix::zeros(self.dims.u_dim(), self.dims.w_dim());
        for (v, es) in self.entries.iter().enumerate() {
            for &(r, c) in es {
                phi[(r, c)] = vars[v];
            }
        }
        phi
    }

    /// Least-squares projection onto the pattern (averages tied entries).
    pub fn project(&self, phi: &DMatrix<f64>) -> Vec<f64> {
        self.entries
            .iter()
            .map(|es| es.iter().map(|&(r, c)| phi[(r, c)]).sum::<f64>() / es.len() as f64)
            .collect()
    }

    /// Whether `phi` has exactly this sparsity and sharing pattern.
    pub fn conforms(&self, phi: &DMatrix<f64>) -> bool {
        if phi.shape() != (self.dims.u_dim(), self.dims.w_dim()) {
            return false;
        }
        let zeros_ok = (0..phi.ncols())
            .all(|c| (0..phi.nrows()).all(|r| self.variable_at(r, c).is_some() || phi[(r, c)] == 0.0));
        let ties_ok = self.entries.iter().all(|es| {
            let first = phi[es[0]];
            es.iter().all(|&e| phi[e] == first)
        });
        zeros_ok && ties_ok
    }
}

/// `(block index, offset in block)` for a column of `Φ_u`.
pub fn column_block(dims: &Dims, col: usize) -> (usize, usize) {
    if col < dims.n {
        (0, col)
    } else {
        let c = col - dims.n;
        (1 + c / dims.p, c % dims.p)
    }
}

/// Whether entry `(row, col)` of `Φ_u` may be nonzero under causality.
pub fn is_causal_entry(dims: &Dims, row: usize, col: usize) -> bool {
    column_block(dims, col).0 <= row / dims.m
}

/// Decision-variable counts: the exact structural count plus the two
/// closed-form counts quoted in the literature, kept for cross-reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVariableCount {
    pub structure: PolicyStructure,
    /// `1 + (free entries of Φ_u)`; this is the count certificates use.
    pub structural: usize,
    /// `1 + m(T-1)(2n + p(T-2))/2`.
    pub closed_form_full: i64,
    /// `1 + m(n + p(T-2))`.
    pub closed_form_toeplitz: i64,
}

pub fn count_decision_variables(dims: &Dims, structure: PolicyStructure) -> DecisionVariableCount {
    let (m, n, p, t) = (dims.m as i64, dims.n as i64, dims.p as i64, dims.horizon as i64);
    DecisionVariableCount {
        structure,
        structural: 1 + VariableLayout::new(*dims, structure).num_free(),
        closed_form_full: 1 + m * (t - 1) * (2 * n + p * (t - 2)) / 2,
        closed_form_toeplitz: 1 + m * (n + p * (t - 2)),
    }
}

/// Build the variable layout enforcing `structure`.
pub fn apply_structure(dims: &Dims, structure: PolicyStructure) -> VariableLayout {
    VariableLayout::new(*dims, structure)
}
