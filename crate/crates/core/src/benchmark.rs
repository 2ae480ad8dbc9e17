//! The clairvoyant benchmark: the noncausal input sequence that minimizes
//! the quadratic cost for a known disturbance and parameter realization.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::lifted::{Dims, ResponseOperators, ScenarioSample};
use crate::linalg::{is_symmetric, max_abs, min_eigenvalue, psd_sqrt, symmetrize};

/// Stacked cost weights `x'Qx + u'Ru` with cached symmetric square roots.
#[derive(Debug, Clone)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sqrt_q: DMatrix<f64>,
    sqrt_r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric(&q, 1e-9) {
            return Err(Error::Invalid("Q must be square and symmetric".into()));
        }
        if !is_symmetric(&r, 1e-9) {
            return Err(Error::Invalid("R must be square and symmetric".into()));
        }
        let q = symmetrize(&q);
        let r = symmetrize(&r);
        if r.nrows() > 0 && min_eigenvalue(&r)? < 1e-9 {
            return Err(Error::Invalid("R must be positive definite".into()));
        }
        let sqrt_q = psd_sqrt(&q, 1e-9)?;
        let sqrt_r = psd_sqrt(&r, 1e-9)?;
        // Q is stored as the square of its clipped root so the two stay consistent.
        let q = &sqrt_q * &sqrt_q;
        Ok(Self { q, r, sqrt_q, sqrt_r })
    }

    /// `Q = I_{nT}`, `R = I_{mT}`.
    pub fn identity(dims: &Dims) -> Self {
        Self::scaled_identity(dims, 1.0, 1.0)
    }

    pub fn scaled_identity(dims: &Dims, q: f64, r: f64) -> Self {
        let qm = DMatrix::identity(dims.x_dim(), dims.x_dim()) * q;
        let rm = DMatrix::identity(dims.u_dim(), dims.u_dim()) * r;
        Self {
            sqrt_q: qm.map(|v| v.max(0.0).sqrt()),
            sqrt_r: rm.map(|v| v.sqrt()),
            q: qm,
            r: rm,
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn sqrt_q(&self) -> &DMatrix<f64> {
        &self.sqrt_q
    }

    pub fn sqrt_r(&self) -> &DMatrix<f64> {
        &self.sqrt_r
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(&self.q * alpha, &self.r * alpha)
    }

    pub fn check(&self, dims: &Dims) -> Result<()> {
        if self.q.nrows() != dims.x_dim() {
            return Err(dim_err("Q", dims.x_dim(), self.q.nrows()));
        }
        if self.r.nrows() != dims.u_dim() {
            return Err(dim_err("R", dims.u_dim(), self.r.nrows()));
        }
        Ok(())
    }

    /// `x'Qx + u'Ru` evaluated through the square roots.
    pub fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (&self.sqrt_q * x).norm_squared() + (&self.sqrt_r * u).norm_squared()
    }
}

/// Noncausal closed-loop maps `Ψ_u`, `Ψ_x` for a single sample.
#[derive(Debug, Clone)]
pub struct ClairvoyantBenchmark {
    pub psi_u: DMatrix<f64>,
    pub psi_x: DMatrix<f64>,
    /// `R + F'QF`, the Hessian of the cost in `u`.
    pub hessian: DMatrix<f64>,
    pub sample: ScenarioSample,
}

/// Solve `(R + F'QF) Ψ_u = -F'QG` by Cholesky and set `Ψ_x = F Ψ_u + G`.
pub fn clairvoyant_policy(resp: &ResponseOperators, weights: &CostWeights) -> Result<ClairvoyantBenchmark> {
    weights.check(&resp.dims)?;
    let qf = weights.q() * &resp.f;
    let hessian = symmetrize(&(weights.r() + resp.f.transpose() * &qf));
    let rhs = -(qf.transpose() * &resp.g);
    let chol = hessian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R + F'QF is not positive definite".into()))?;
    let psi_u = chol.solve(&rhs);
    let residual = max_abs(&(&hessian * &psi_u - &rhs)) / max_abs(&rhs).max(1.0);
    if !residual.is_finite() || residual > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "benchmark normal-equation residual {residual:.3e} exceeds 1e-8"
        )));
    }
    let psi_x = &resp.f * &psi_u + &resp.g;
    Ok(ClairvoyantBenchmark {
        psi_u,
        psi_x,
        hessian,
        sample: resp.sample.clone(),
    })
}

/// `J(ψ, w) = ‖Q^{1/2} Ψ_x w‖² + ‖R^{1/2} Ψ_u w‖²`.
pub fn benchmark_cost(bench: &ClairvoyantBenchmark, weights: &CostWeights, w: &DVector<f64>) -> Result<f64> {
    if w.len() != bench.psi_u.ncols() {
        return Err(dim_err("disturbance", bench.psi_u.ncols(), w.len()));
    }
    if weights.q().nrows() != bench.psi_x.nrows() || weights.r().nrows() != bench.psi_u.nrows() {
        return Err(dim_err("cost weights", bench.psi_x.nrows(), weights.q().nrows()));
    }
    Ok(weights.cost(&(&bench.psi_x * w), &(&bench.psi_u * w)))
}
