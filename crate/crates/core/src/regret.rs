//! Realized costs, the regret quadratic form and worst-case disturbances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmark::{benchmark_cost, ClairvoyantBenchmark, CostWeights};
use crate::error::{dim_err, Error, Result};
use crate::lifted::{closed_loop_state_map, Dims, ResponseOperators};
use crate::linalg::{max_abs, symmetrize, top_eigenpair};
use crate::structure::{PolicyStructure, VariableLayout};

/// Relative tolerance for tied entries when validating a user-supplied gain.
const TIE_TOL: f64 = 1e-12;

/// A causal linear disturbance-feedback policy `u = Φ_u w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalPolicy {
    dims: Dims,
    structure: PolicyStructure,
    #[serde(with = "crate::linalg::serde_rows")]
    phi_u: DMatrix<f64>,
}

impl CausalPolicy {
    /// Validate `phi_u` against the causal pattern of `structure`.
    ///
    /// Entries outside the pattern must be exactly zero; tied entries must
    /// agree to a relative `1e-12`.
    pub fn new(dims: Dims, structure: PolicyStructure, phi_u: DMatrix<f64>) -> Result<Self> {
        if phi_u.shape() != (dims.u_dim(), dims.w_dim()) {
            return Err(dim_err(
                "Phi_u",
                format!("{}x{}", dims.u_dim(), dims.w_dim()),
                format!("{}x{}", phi_u.nrows(), phi_u.ncols()),
            ));
        }
        if phi_u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("Phi_u has non-finite entries".into()));
        }
        let layout = VariableLayout::new(dims, structure);
        for c in 0..phi_u.ncols() {
            for r in 0..phi_u.nrows() {
                if layout.variable_at(r, c).is_none() && phi_u[(r, c)] != 0.0 {
                    return Err(Error::Invalid(format!(
                        "Phi_u entry ({r}, {c}) violates causality"
                    )));
                }
            }
        }
        let scale = max_abs(&phi_u).max(1.0);
        for v in 0..layout.num_free() {
            let es = layout.entries(v);
            let first = phi_u[es[0]];
            if es.iter().any(|&e| (phi_u[e] - first).abs() > TIE_TOL * scale) {
                return Err(Error::Invalid(format!("Phi_u breaks the {structure} pattern")));
            }
        }
        // Snap tied entries so the pattern holds exactly.
        let phi_u = layout.assemble(&layout.project(&phi_u));
        Ok(Self { dims, structure, phi_u })
    }

    /// Build from free variables of `layout`; the pattern holds by construction.
    pub fn from_variables(layout: &VariableLayout, vars: &[f64]) -> Self {
        Self {
            dims: *layout.dims(),
            structure: layout.structure(),
            phi_u: layout.assemble(vars),
        }
    }

    pub fn zero(dims: Dims, structure: PolicyStructure) -> Self {
        Self {
            dims,
            structure,
            phi_u: DMatrix::zeros(dims.u_dim(), dims.w_dim()),
        }
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn structure(&self) -> PolicyStructure {
        self.structure
    }

    pub fn phi_u(&self) -> &DMatrix<f64> {
        &self.phi_u
    }

    fn check(&self, resp: &ResponseOperators) -> Result<()> {
        if self.dims.u_dim() != resp.dims.u_dim() || self.dims.w_dim() != resp.dims.w_dim() {
            return Err(dim_err(
                "policy vs response operators",
                format!("{}x{}", resp.dims.u_dim(), resp.dims.w_dim()),
                format!("{}x{}", self.dims.u_dim(), self.dims.w_dim()),
            ));
        }
        Ok(())
    }
}

/// Symmetric matrix `Δ` with `regret(w) = w'Δw`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretGram {
    pub delta: DMatrix<f64>,
}

/// `[sqrtQ Φ_x; sqrtR Φ_u]`, whose Gram matrix gives the policy cost.
pub fn cost_factor(phi_u: &DMatrix<f64>, resp: &ResponseOperators, weights: &CostWeights) -> Result<DMatrix<f64>> {
    weights.check(&resp.dims)?;
    let phi_x = closed_loop_state_map(resp, phi_u)?;
    let top = weights.sqrt_q() * phi_x;
    let bottom = weights.sqrt_r() * phi_u;
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), phi_u.ncols());
    out.rows_mut(0, top.nrows()).copy_from(&top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    Ok(out)
}

fn benchmark_factor(bench: &ClairvoyantBenchmark, weights: &CostWeights) -> DMatrix<f64> {
    let top = weights.sqrt_q() * &bench.psi_x;
    let bottom = weights.sqrt_r() * &bench.psi_u;
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), bench.psi_u.ncols());
    out.rows_mut(0, top.nrows()).copy_from(&top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    out
}

fn check_sample(bench: &ClairvoyantBenchmark, resp: &ResponseOperators) -> Result<()> {
    if bench.sample != resp.sample {
        return Err(Error::SampleMismatch);
    }
    Ok(())
}

/// `J(π, w) = ‖sqrtQ (FΦ_u + G) w‖² + ‖sqrtR Φ_u w‖²`.
pub fn realized_cost(
    policy: &CausalPolicy,
    resp: &ResponseOperators,
    weights: &CostWeights,
    w: &DVector<f64>,
) -> Result<f64> {
    policy.check(resp)?;
    weights.check(&resp.dims)?;
    if w.len() != resp.dims.w_dim() {
        return Err(dim_err("disturbance", resp.dims.w_dim(), w.len()));
    }
    let u = policy.phi_u() * w;
    let x = &resp.f * &u + &resp.g * w;
    Ok(weights.cost(&x, &u))
}

/// `J(π, w) − J(ψ, w)`.
pub fn per_instance_regret(
    policy: &CausalPolicy,
    bench: &ClairvoyantBenchmark,
    resp: &ResponseOperators,
    weights: &CostWeights,
    w: &DVector<f64>,
) -> Result<f64> {
    check_sample(bench, resp)?;
    Ok(realized_cost(policy, resp, weights, w)? - benchmark_cost(bench, weights, w)?)
}

/// `Δ = M'M − N'N` for the policy and benchmark cost factors.
pub fn regret_gram(
    policy: &CausalPolicy,
    bench: &ClairvoyantBenchmark,
    resp: &ResponseOperators,
    weights: &CostWeights,
) -> Result<RegretGram> {
    check_sample(bench, resp)?;
    policy.check(resp)?;
    Ok(RegretGram {
        delta: regret_matrix(policy.phi_u(), bench, resp, weights)?,
    })
}

/// [`regret_gram`] on a raw gain matrix, without the causality check.
pub fn regret_matrix(
    phi_u: &DMatrix<f64>,
    bench: &ClairvoyantBenchmark,
    resp: &ResponseOperators,
    weights: &CostWeights,
) -> Result<DMatrix<f64>> {
    check_sample(bench, resp)?;
    let m = cost_factor(phi_u, resp, weights)?;
    let n = benchmark_factor(bench, weights);
    Ok(symmetrize(&(m.transpose() * &m - n.transpose() * &n)))
}

/// `λ_max(Δ)` and the maximizing unit disturbance.
pub fn worst_case_regret(gram: &RegretGram) -> Result<(f64, DVector<f64>)> {
    top_eigenpair(&symmetrize(&gram.delta))
}

/// Squared spectral norm of the policy cost factor and its maximizing unit disturbance.
pub fn worst_case_cost(
    policy: &CausalPolicy,
    resp: &ResponseOperators,
    weights: &CostWeights,
) -> Result<(f64, DVector<f64>)> {
    policy.check(resp)?;
    let m = cost_factor(policy.phi_u(), resp, weights)?;
    top_eigenpair(&symmetrize(&(m.transpose() * m)))
}
