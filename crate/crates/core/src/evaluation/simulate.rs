//! Step-by-step closed-loop simulation, disturbance reconstruction from
//! trajectories, and state-feedback realization of a disturbance-feedback gain.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::lifted::{Dims, ResponseOperators, ScenarioSample, UncertainSystem};
use crate::linalg::max_abs;
use crate::regret::CausalPolicy;

/// Relative residual above which a trajectory is declared off-model.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

/// Condition number beyond which `Φ_x` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(x_0, …, x_{T-1})`.
    pub x: DVector<f64>,
    /// `(u_0, …, u_{T-1})`.
    pub u: DVector<f64>,
}

/// Simulate `x_{t+1} = A_t x_t + B_t u_t + E_t w_t` with `u_t = (Φ_u w)_t`.
pub fn simulate_closed_loop(
    policy: &CausalPolicy,
    system: &UncertainSystem,
    sample: &ScenarioSample,
    w: &DVector<f64>,
) -> Result<Trajectory> {
    simulate_with_gain(policy.phi_u(), system, sample, w)
}

/// As [`simulate_closed_loop`] for an arbitrary (possibly noncausal) gain.
pub fn simulate_with_gain(
    phi_u: &DMatrix<f64>,
    system: &UncertainSystem,
    sample: &ScenarioSample,
    w: &DVector<f64>,
) -> Result<Trajectory> {
    let dims = system.dims;
    let Dims { n, m, p, horizon, .. } = dims;
    sample.check(&dims)?;
    if w.len() != dims.w_dim() {
        return Err(dim_err("disturbance", dims.w_dim(), w.len()));
    }
    if phi_u.shape() != (dims.u_dim(), dims.w_dim()) {
        return Err(dim_err(
            "Phi_u",
            format!("{}x{}", dims.u_dim(), dims.w_dim()),
            format!("{}x{}", phi_u.nrows(), phi_u.ncols()),
        ));
    }
    let mut x = DVector::zeros(dims.x_dim());
    let mut u = DVector::zeros(dims.u_dim());
    x.rows_mut(0, n).copy_from(&w.rows(0, n));
    for t in 0..horizon {
        let ut = phi_u.rows(m * t, m) * w;
        u.rows_mut(m * t, m).copy_from(&ut);
        if t + 1 < horizon {
            let s = system.step(t, sample.at(t))?;
            let next = &s.a * x.rows(n * t, n) + &s.b * &ut + &s.e * w.rows(n + p * t, p);
            x.rows_mut(n * (t + 1), n).copy_from(&next);
        }
    }
    Ok(Trajectory { x, u })
}

/// Recover `(w_0, …, w_{T-2})` from a state and input trajectory by least squares.
pub fn reconstruct_disturbance(
    system: &UncertainSystem,
    sample: &ScenarioSample,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dims = system.dims;
    let Dims { n, m, p, horizon, .. } = dims;
    sample.check(&dims)?;
    if x.len() != dims.x_dim() {
        return Err(dim_err("state trajectory", dims.x_dim(), x.len()));
    }
    if u.len() != dims.u_dim() {
        return Err(dim_err("input trajectory", dims.u_dim(), u.len()));
    }
    let mut w = DVector::zeros(p * (horizon - 1));
    for t in 0..horizon - 1 {
        let s = system.step(t, sample.at(t))?;
        let r = x.rows(n * (t + 1), n) - &s.a * x.rows(n * t, n) - &s.b * u.rows(m * t, m);
        let svd = s.e.clone().svd(true, true);
        let wt = svd
            .solve(&r, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
        let residual = (&s.e * &wt - &r).norm();
        if residual > RECONSTRUCTION_TOL * r.norm().max(1.0) {
            return Err(Error::InconsistentTrajectory { step: t, residual });
        }
        w.rows_mut(p * t, p).copy_from(&wt);
    }
    Ok(w)
}

/// `K = Φ_u Φ_x^{-1}` so that `u = K x` reproduces the disturbance-feedback law.
pub fn realize_state_feedback(policy: &CausalPolicy, resp: &ResponseOperators) -> Result<DMatrix<f64>> {
    state_feedback_gain(policy.phi_u(), resp)
}

pub fn state_feedback_gain(phi_u: &DMatrix<f64>, resp: &ResponseOperators) -> Result<DMatrix<f64>> {
    let dims = resp.dims;
    if dims.n != dims.p {
        return Err(Error::NotSquare { n: dims.n, p: dims.p });
    }
    let phi_x = &resp.f * phi_u + &resp.g;
    let sv = phi_x.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularMap { condition });
    }
    let lu = phi_x.transpose().lu();
    let kt = lu
        .solve(&phi_u.transpose())
        .ok_or(Error::SingularMap { condition })?;
    let k = kt.transpose();
    let residual = max_abs(&(phi_u - &k * &phi_x));
    if residual > 1e-8 * max_abs(phi_u).max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "state-feedback realization residual {residual:.3e}"
        )));
    }
    Ok(k)
}
