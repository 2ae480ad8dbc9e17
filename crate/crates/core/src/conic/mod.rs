//! Conic programs `min c'x  s.t.  h - G x ∈ K` over products of the
//! nonnegative orthant, second-order cones and PSD cones, plus a
//! primal-dual interior-point backend.
//!
//! Constraint blocks are abstract so that large structured blocks (one LMI
//! per scenario) never have to be stored as dense `G` matrices.

#[cfg(feature = "clarabel")]
mod clarabel_backend;
mod ipm;
pub mod scaling;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svec_len, svec_order};

#[cfg(feature = "clarabel")]
pub use clarabel_backend::Clarabel;
pub use ipm::InteriorPoint;
pub use scaling::ConeScaling;

/// Environment variable selecting the backend.
pub const SOLVER_ENV: &str = "REGRET_SOLVER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "size", rename_all = "snake_case")]
pub enum Cone {
    NonNeg(usize),
    /// `{(t, v) : ‖v‖ ≤ t}` of total dimension `size`.
    Soc(usize),
    /// Symmetric PSD matrices of the given order, stored as `svec`.
    Psd(usize),
}

impl Cone {
    /// Length of the vectorized cone.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNeg(n) | Cone::Soc(n) => n,
            Cone::Psd(d) => svec_len(d),
        }
    }

    /// Barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNeg(n) => n,
            Cone::Soc(_) => 1,
            Cone::Psd(d) => d,
        }
    }
}

/// One cone constraint `h_k - G_k x ∈ K_k`.
pub trait ConeBlock: Send + Sync {
    fn cone(&self) -> Cone;

    fn num_vars(&self) -> usize;

    fn offset(&self) -> &DVector<f64>;

    /// `out = G_k x`.
    fn apply(&self, x: &[f64], out: &mut [f64]);

    /// `out += G_kᵀ y`.
    fn apply_adjoint_add(&self, y: &[f64], out: &mut [f64]);

    fn dense(&self) -> DMatrix<f64> {
        let (rows, cols) = (self.cone().dim(), self.num_vars());
        let mut g = DMatrix::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            self.apply(&e, g.column_mut(j).as_mut_slice());
            e[j] = 0.0;
        }
        g
    }

    /// `W^{-T} G_k` as a dense matrix.
    fn scaled_matrix(&self, scaling: &ConeScaling) -> DMatrix<f64> {
        let g = self.dense();
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for j in 0..g.ncols() {
            let col = scaling.apply_wit(g.column(j).as_slice());
            out.set_column(j, &col);
        }
        out
    }
}

/// Block stored as an explicit matrix.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    cone: Cone,
    g: DMatrix<f64>,
    h: DVector<f64>,
}

impl DenseBlock {
    pub fn new(cone: Cone, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        if g.nrows() != cone.dim() || h.len() != cone.dim() {
            return Err(Error::Invalid(format!(
                "cone of dimension {} given G with {} rows and h of length {}",
                cone.dim(),
                g.nrows(),
                h.len()
            )));
        }
        Ok(Self { cone, g, h })
    }
}

impl ConeBlock for DenseBlock {
    fn cone(&self) -> Cone {
        self.cone
    }

    fn num_vars(&self) -> usize {
        self.g.ncols()
    }

    fn offset(&self) -> &DVector<f64> {
        &self.h
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let y = &self.g * DVector::from_column_slice(x);
        out.copy_from_slice(y.as_slice());
    }

    fn apply_adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.g.column(j).iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        self.g.clone()
    }
}

/// Objective plus constraint blocks.
pub struct ConicProblem {
    pub c: DVector<f64>,
    pub blocks: Vec<Box<dyn ConeBlock>>,
}

impl ConicProblem {
    pub fn new(c: DVector<f64>) -> Self {
        Self { c, blocks: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn push(&mut self, block: Box<dyn ConeBlock>) -> Result<()> {
        if block.num_vars() != self.c.len() {
            return Err(Error::Invalid(format!(
                "block expects {} variables, problem has {}",
                block.num_vars(),
                self.c.len()
            )));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn describe(&self) -> ConicProgramDescription {
        ConicProgramDescription {
            num_variables: self.num_vars(),
            objective: self.c.as_slice().to_vec(),
            constraints: self
                .blocks
                .iter()
                .map(|b| ConeConstraint {
                    cone: b.cone(),
                    g: crate::linalg::to_rows(&b.dense()),
                    h: b.offset().as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

/// Backend-neutral JSON form of a [`ConicProblem`].
///
/// Each constraint reads `h - G x ∈ cone`. PSD cones are vectorized as the
/// lower triangle, column by column, with off-diagonal entries scaled by √2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgramDescription {
    pub num_variables: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<ConeConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub cone: Cone,
    /// Row-major `G`.
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

impl ConicProgramDescription {
    /// Rebuild a solvable problem with dense blocks.
    pub fn to_problem(&self) -> Result<ConicProblem> {
        if self.objective.len() != self.num_variables {
            return Err(Error::Invalid("objective length differs from num_variables".into()));
        }
        let mut p = ConicProblem::new(DVector::from_column_slice(&self.objective));
        for c in &self.constraints {
            if let Cone::Psd(d) = c.cone {
                if svec_order(c.h.len()) != Some(d) {
                    return Err(Error::Invalid(format!("PSD cone of order {d} has h of length {}", c.h.len())));
                }
            }
            let g = if c.g.is_empty() {
                DMatrix::zeros(0, self.num_variables)
            } else {
                crate::linalg::from_rows(&c.g)?
            };
            if g.ncols() != self.num_variables {
                return Err(Error::Invalid("constraint matrix width differs from num_variables".into()));
            }
            p.push(Box::new(DenseBlock::new(c.cone, g, DVector::from_column_slice(&c.h))?))?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    /// Primal/dual residual tolerance.
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            time_limit: None,
            feastol: 1e-8,
            abstol: 1e-8,
            reltol: 1e-8,
            step_fraction: 0.99,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    /// Stopped early with residuals within 1000× the tolerances.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    TimeLimit,
    NumericalError,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("unknown"))
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolverStatus,
    pub x: DVector<f64>,
    /// Primal slack per block.
    pub s: Vec<DVector<f64>>,
    /// Dual variable per block.
    pub z: Vec<DVector<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution>;
}

/// Backend chosen by `REGRET_SOLVER`: `ipm` (default) or `clarabel`.
pub fn backend_from_env() -> Result<Box<dyn ConicBackend>> {
    match std::env::var(SOLVER_ENV).ok().as_deref() {
        None | Some("") | Some("ipm") => Ok(Box::new(InteriorPoint)),
        #[cfg(feature = "clarabel")]
        Some("clarabel") => Ok(Box::new(Clarabel)),
        Some(other) => Err(Error::Invalid(format!("unknown conic backend `{other}` in {SOLVER_ENV}"))),
    }
}
