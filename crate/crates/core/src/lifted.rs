//! Finite-horizon lifting of uncertain linear time-varying dynamics.
//!
//! Trajectories are stacked as `x = (x_0, …, x_{T-1})`, `u = (u_0, …, u_{T-1})`
//! and `w = (x_0, w_0, …, w_{T-2})`, so the initial state travels with the
//! disturbance. The stacked recursion `x = Z A x + Z B u + E w` is solved in
//! closed form as `x = F u + G w`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::block_diag;

/// Singular-value ratio below which `E_t` is declared rank deficient.
pub const E_RANK_TOL: f64 = 1e-10;

/// Problem dimensions and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Input dimension.
    pub m: usize,
    /// Disturbance dimension.
    pub p: usize,
    /// Parameter dimension per step.
    pub d: usize,
    /// Number of steps `T`.
    pub horizon: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, p: usize, d: usize, horizon: usize) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 || horizon == 0 {
            return Err(Error::Invalid(format!(
                "dimensions must be positive (n={n}, m={m}, p={p}, T={horizon})"
            )));
        }
        Ok(Self { n, m, p, d, horizon })
    }

    /// Length of the stacked disturbance `n + p(T-1)`.
    pub fn w_dim(&self) -> usize {
        self.n + self.p * (self.horizon - 1)
    }

    pub fn x_dim(&self) -> usize {
        self.n * self.horizon
    }

    pub fn u_dim(&self) -> usize {
        self.m * self.horizon
    }

    /// First column of the disturbance block feeding step `t + 1`
    /// (block 0 is `x_0`, block `j ≥ 1` is `w_{j-1}`).
    pub fn w_block_offset(&self, block: usize) -> usize {
        if block == 0 {
            0
        } else {
            self.n + (block - 1) * self.p
        }
    }

    pub fn w_block_width(&self, block: usize) -> usize {
        if block == 0 {
            self.n
        } else {
            self.p
        }
    }
}

/// System matrices `(A_t, B_t, E_t)` at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

/// Parameter-to-matrix map `(t, θ_t) ↦ (A_t, B_t, E_t)`.
///
/// Any dependence on `θ_t` is allowed; closures implement this trait.
pub trait Dynamics: Send + Sync {
    fn matrices(&self, t: usize, theta: &DVector<f64>) -> StepMatrices;
}

impl<F> Dynamics for F
where
    F: Fn(usize, &DVector<f64>) -> StepMatrices + Send + Sync,
{
    fn matrices(&self, t: usize, theta: &DVector<f64>) -> StepMatrices {
        self(t, theta)
    }
}

/// `M(θ) = M_0 + Σ_i θ_i M_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix {
    #[serde(with = "crate::linalg::serde_rows")]
    pub constant: DMatrix<f64>,
    #[serde(default, with = "serde_matrix_list")]
    pub coefficients: Vec<DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            coefficients: Vec::new(),
        }
    }

    pub fn eval(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (coef, &th) in self.coefficients.iter().zip(theta.iter()) {
            out += coef * th;
        }
        out
    }

    fn check(&self, rows: usize, cols: usize, d: usize, what: &str) -> Result<()> {
        if self.constant.shape() != (rows, cols) {
            return Err(dim_err(what, format!("{rows}x{cols}"), format!("{:?}", self.constant.shape())));
        }
        if self.coefficients.len() > d {
            return Err(dim_err(what, format!("at most {d} coefficients"), self.coefficients.len()));
        }
        for c in &self.coefficients {
            if c.shape() != (rows, cols) {
                return Err(dim_err(what, format!("{rows}x{cols}"), format!("{:?}", c.shape())));
            }
        }
        Ok(())
    }
}

mod serde_matrix_list {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<_> = ms.iter().map(crate::linalg::to_rows).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let rows = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.iter()
            .map(|r| crate::linalg::from_rows(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Affine-in-θ matrices for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineStep {
    pub a: AffineMatrix,
    pub b: AffineMatrix,
    pub e: AffineMatrix,
}

/// Declarative, serializable dynamics. A single step entry is reused for
/// every `t`; otherwise there must be exactly `T` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineDynamics {
    pub steps: Vec<AffineStep>,
}

impl AffineDynamics {
    pub fn validate(&self, dims: &Dims) -> Result<()> {
        if self.steps.len() != 1 && self.steps.len() != dims.horizon {
            return Err(dim_err("affine dynamics steps", format!("1 or {}", dims.horizon), self.steps.len()));
        }
        for s in &self.steps {
            s.a.check(dims.n, dims.n, dims.d, "affine A")?;
            s.b.check(dims.n, dims.m, dims.d, "affine B")?;
            s.e.check(dims.n, dims.p, dims.d, "affine E")?;
        }
        Ok(())
    }
}

impl Dynamics for AffineDynamics {
    fn matrices(&self, t: usize, theta: &DVector<f64>) -> StepMatrices {
        let step = if self.steps.len() == 1 { &self.steps[0] } else { &self.steps[t] };
        StepMatrices {
            a: step.a.eval(theta),
            b: step.b.eval(theta),
            e: step.e.eval(theta),
        }
    }
}

/// Uncertain LTV system: dimensions plus the parameter-to-matrix callback.
#[derive(Clone)]
pub struct UncertainSystem {
    pub dims: Dims,
    pub dynamics: Arc<dyn Dynamics>,
    pub name: String,
}

impl fmt::Debug for UncertainSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UncertainSystem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl UncertainSystem {
    pub fn new(name: impl Into<String>, dims: Dims, dynamics: Arc<dyn Dynamics>) -> Self {
        Self {
            dims,
            dynamics,
            name: name.into(),
        }
    }

    pub fn affine(name: impl Into<String>, dims: Dims, dynamics: AffineDynamics) -> Result<Self> {
        dynamics.validate(&dims)?;
        Ok(Self::new(name, dims, Arc::new(dynamics)))
    }

    pub fn step(&self, t: usize, theta: &DVector<f64>) -> Result<StepMatrices> {
        let mats = self.dynamics.matrices(t, theta);
        let Dims { n, m, p, .. } = self.dims;
        for (what, mat, shape) in [("A", &mats.a, (n, n)), ("B", &mats.b, (n, m)), ("E", &mats.e, (n, p))] {
            if mat.shape() != shape {
                return Err(dim_err(
                    &format!("{what}_{t} returned by dynamics"),
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{}", mat.nrows(), mat.ncols()),
                ));
            }
        }
        Ok(mats)
    }
}

/// One draw of the parameter sequence `θ_0, …, θ_{T-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ScenarioSample {
    theta: Vec<DVector<f64>>,
}

impl ScenarioSample {
    pub fn new(theta: Vec<DVector<f64>>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Invalid("scenario sample must cover at least one step".into()));
        }
        let d = theta[0].len();
        if theta.iter().any(|t| t.len() != d) {
            return Err(Error::Invalid("parameter vectors have differing lengths".into()));
        }
        if theta.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invalid("non-finite parameter value".into()));
        }
        Ok(Self { theta })
    }

    /// The same parameter vector at every step.
    pub fn constant(theta: DVector<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![theta; horizon])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn at(&self, t: usize) -> &DVector<f64> {
        &self.theta[t]
    }

    pub fn steps(&self) -> &[DVector<f64>] {
        &self.theta
    }

    pub fn check(&self, dims: &Dims) -> Result<()> {
        if self.theta.len() != dims.horizon {
            return Err(dim_err("scenario sample length", dims.horizon, self.theta.len()));
        }
        if self.theta[0].len() != dims.d {
            return Err(dim_err("parameter dimension", dims.d, self.theta[0].len()));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for ScenarioSample {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(DVector::from_vec).collect())
    }
}

impl From<ScenarioSample> for Vec<Vec<f64>> {
    fn from(s: ScenarioSample) -> Self {
        s.theta.into_iter().map(|v| v.as_slice().to_vec()).collect()
    }
}

/// Block-diagonal stacked dynamics for one sample.
#[derive(Debug, Clone)]
pub struct StackedOperators {
    pub dims: Dims,
    pub a_blk: DMatrix<f64>,
    pub b_blk: DMatrix<f64>,
    /// `blkdiag(I_n, E_0, …, E_{T-2})`.
    pub e_blk: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub steps: Vec<StepMatrices>,
    pub sample: ScenarioSample,
}

/// Causal response operators with `x = F u + G w`.
#[derive(Debug, Clone)]
pub struct ResponseOperators {
    pub dims: Dims,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub sample: ScenarioSample,
}

/// `nT × nT` matrix with `I_n` on the first block sub-diagonal.
pub fn block_downshift(horizon: usize, n: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n * horizon, n * horizon);
    for i in 0..horizon.saturating_sub(1) {
        z.view_mut(((i + 1) * n, i * n), (n, n)).fill_with_identity();
    }
    z
}

/// Evaluate the dynamics along `sample` and stack them block-diagonally.
pub fn stack_dynamics(system: &UncertainSystem, sample: &ScenarioSample) -> Result<StackedOperators> {
    let dims = system.dims;
    sample.check(&dims)?;
    let steps = (0..dims.horizon)
        .map(|t| system.step(t, sample.at(t)))
        .collect::<Result<Vec<_>>>()?;

    for (t, s) in steps.iter().enumerate() {
        let sv = s.e.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if sv.len() < dims.p || ratio <= E_RANK_TOL {
            return Err(Error::RankDeficientE { step: t, ratio });
        }
    }

    let a_blk = block_diag(&steps.iter().map(|s| s.a.clone()).collect::<Vec<_>>());
    let b_blk = block_diag(&steps.iter().map(|s| s.b.clone()).collect::<Vec<_>>());
    let mut e_parts = vec![DMatrix::identity(dims.n, dims.n)];
    e_parts.extend(steps.iter().take(dims.horizon - 1).map(|s| s.e.clone()));
    let e_blk = block_diag(&e_parts);

    Ok(StackedOperators {
        dims,
        a_blk,
        b_blk,
        e_blk,
        z: block_downshift(dims.horizon, dims.n),
        steps,
        sample: sample.clone(),
    })
}

/// Solve `(I - Z A) X = Y` by forward block substitution.
fn causal_solve(stacked: &StackedOperators, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = stacked.dims.n;
    let mut x = y.clone();
    for t in 1..stacked.dims.horizon {
        let prev = x.rows(n * (t - 1), n).into_owned();
        let update = &stacked.steps[t - 1].a * prev;
        let mut row = x.rows_mut(n * t, n);
        row += update;
    }
    x
}

/// `F = (I - Z A)^{-1} Z B` and `G = (I - Z A)^{-1} E`.
pub fn response_operators(stacked: &StackedOperators) -> ResponseOperators {
    let Dims { n, m, horizon, .. } = stacked.dims;
    let mut zb = DMatrix::zeros(n * horizon, m * horizon);
    for t in 1..horizon {
        zb.view_mut((n * t, m * (t - 1)), (n, m)).copy_from(&stacked.steps[t - 1].b);
    }
    ResponseOperators {
        dims: stacked.dims,
        f: causal_solve(stacked, &zb),
        g: causal_solve(stacked, &stacked.e_blk),
        sample: stacked.sample.clone(),
    }
}

/// Convenience: stack and lift in one call.
pub fn lift(system: &UncertainSystem, sample: &ScenarioSample) -> Result<(StackedOperators, ResponseOperators)> {
    let stacked = stack_dynamics(system, sample)?;
    let resp = response_operators(&stacked);
    Ok((stacked, resp))
}

/// `Φ_x = F Φ_u + G`.
pub fn closed_loop_state_map(resp: &ResponseOperators, phi_u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dims = resp.dims;
    if phi_u.shape() != (dims.u_dim(), dims.w_dim()) {
        return Err(dim_err(
            "Phi_u",
            format!("{}x{}", dims.u_dim(), dims.w_dim()),
            format!("{}x{}", phi_u.nrows(), phi_u.ncols()),
        ));
    }
    Ok(&resp.f * phi_u + &resp.g)
}

/// Step-by-step recursion `x_{t+1} = A_t x_t + B_t u_t + E_t w_t` with
/// `x_0` taken from the head of `w`.
pub fn simulate_inputs(stacked: &StackedOperators, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let dims = stacked.dims;
    let Dims { n, m, p, horizon, .. } = dims;
    if u.len() != dims.u_dim() {
        return Err(dim_err("input sequence", dims.u_dim(), u.len()));
    }
    if w.len() != dims.w_dim() {
        return Err(dim_err("disturbance sequence", dims.w_dim(), w.len()));
    }
    let mut x = DVector::zeros(dims.x_dim());
    x.rows_mut(0, n).copy_from(&w.rows(0, n));
    for t in 0..horizon - 1 {
        let s = &stacked.steps[t];
        let next = &s.a * x.rows(n * t, n) + &s.b * u.rows(m * t, m) + &s.e * w.rows(n + p * t, p);
        x.rows_mut(n * (t + 1), n).copy_from(&next);
    }
    Ok(x)
}
