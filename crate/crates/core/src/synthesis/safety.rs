//! Polytopic safety constraints robustified over an ellipsoidal disturbance
//! set, one second-order-cone row per polytope face.
//!
//! With `w = H_w d`, `‖d‖ ≤ 1`, the face `H_x x + H_u u ≤ h` holds for all
//! admissible `w` iff `‖H_wᵀ (H_x Φ_x + H_u Φ_u)_iᵀ‖ ≤ h_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{Cone, DenseBlock};
use crate::error::{dim_err, Error, Result};
use crate::lifted::{Dims, ResponseOperators, ScenarioSample};
use crate::linalg::serde_rows;
use crate::structure::VariableLayout;

/// Polytope and disturbance-shaping data for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRows {
    #[serde(with = "serde_rows")]
    pub h_x: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub h_u: DMatrix<f64>,
    pub h: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub h_w: DMatrix<f64>,
}

impl SafetyRows {
    pub fn validate(&self, dims: &Dims) -> Result<()> {
        let s = self.h.len();
        if self.h_x.nrows() != s || self.h_u.nrows() != s {
            return Err(dim_err("safety row count", s, format!("{}/{}", self.h_x.nrows(), self.h_u.nrows())));
        }
        if self.h_x.ncols() != dims.x_dim() {
            return Err(dim_err("H_x columns", dims.x_dim(), self.h_x.ncols()));
        }
        if self.h_u.ncols() != dims.u_dim() {
            return Err(dim_err("H_u columns", dims.u_dim(), self.h_u.ncols()));
        }
        if self.h_w.nrows() != dims.w_dim() {
            return Err(dim_err("H_w rows", dims.w_dim(), self.h_w.nrows()));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("safety bound h has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Source of safety data per uncertainty sample.
pub trait SafetySpec: Send + Sync {
    fn rows(&self, sample: &ScenarioSample) -> Result<SafetyRows>;
}

/// The same polytope and disturbance set for every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSafety(pub SafetyRows);

impl SafetySpec for FixedSafety {
    fn rows(&self, _sample: &ScenarioSample) -> Result<SafetyRows> {
        Ok(self.0.clone())
    }
}

impl<F> SafetySpec for F
where
    F: Fn(&ScenarioSample) -> Result<SafetyRows> + Send + Sync,
{
    fn rows(&self, sample: &ScenarioSample) -> Result<SafetyRows> {
        self(sample)
    }
}

/// One robustified face: `‖linear · vars + constant‖ ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    /// Maps policy variables to the shaped row (`q × free vars`).
    pub linear: DMatrix<f64>,
    pub constant: DVector<f64>,
    pub bound: f64,
}

impl SocRow {
    /// Left-hand side `‖H_wᵀ (row of H_x Φ_x + H_u Φ_u)ᵀ‖`.
    pub fn lhs(&self, policy_vars: &[f64]) -> f64 {
        (&self.linear * DVector::from_column_slice(policy_vars) + &self.constant).norm()
    }

    /// Whether the row does not depend on the policy at all.
    pub fn is_constant(&self) -> bool {
        self.linear.iter().all(|v| *v == 0.0)
    }

    /// Cone block `(bound + slack, linear x + constant) ∈ SOC`.
    pub fn to_block(&self, num_vars: usize, slack_index: Option<usize>) -> Result<DenseBlock> {
        let q = self.constant.len();
        let nf = self.linear.ncols();
        let mut g = DMatrix::zeros(q + 1, num_vars);
        if let Some(k) = slack_index {
            g[(0, k)] = -1.0;
        }
        g.view_mut((1, 0), (q, nf)).copy_from(&(-&self.linear));
        let mut h = DVector::zeros(q + 1);
        h[0] = self.bound;
        h.rows_mut(1, q).copy_from(&self.constant);
        DenseBlock::new(Cone::Soc(q + 1), g, h)
    }
}

/// SOC rows for one sample, affine in the policy variables of `layout`.
pub fn assemble_safety_soc(layout: &VariableLayout, rows: &SafetyRows, resp: &ResponseOperators) -> Result<Vec<SocRow>> {
    rows.validate(&resp.dims)?;
    if layout.dims().u_dim() != resp.dims.u_dim() || layout.dims().w_dim() != resp.dims.w_dim() {
        return Err(dim_err("layout vs response operators", resp.dims.w_dim(), layout.dims().w_dim()));
    }
    // Row i of (H_x F + H_u) Φ + H_x G, then shaped by H_w.
    let k = &rows.h_x * &resp.f + &rows.h_u;
    let g = &rows.h_x * &resp.g;
    let shaped_g = &g * &rows.h_w;
    let q = rows.h_w.ncols();
    let nf = layout.num_free();
    Ok((0..rows.h.len())
        .map(|i| {
            let mut linear = DMatrix::zeros(q, nf);
            for v in 0..nf {
                for &(r, c) in layout.entries(v) {
                    let coef = k[(i, r)];
                    if coef != 0.0 {
                        for j in 0..q {
                            linear[(j, v)] += coef * rows.h_w[(c, j)];
                        }
                    }
                }
            }
            SocRow {
                linear,
                constant: shaped_g.row(i).transpose(),
                bound: rows.h[i],
            }
        })
        .collect())
}

/// Robustified left-hand side of every face for a given gain.
pub fn row_lhs_values(rows: &SafetyRows, resp: &ResponseOperators, phi_u: &DMatrix<f64>) -> Result<Vec<f64>> {
    rows.validate(&resp.dims)?;
    let a = (&rows.h_x * &resp.f + &rows.h_u) * phi_u + &rows.h_x * &resp.g;
    let shaped = a * &rows.h_w;
    Ok((0..rows.h.len()).map(|i| shaped.row(i).norm()).collect())
}

/// Realized value of face `i`, `(H_x x + H_u u)_i`, for a policy and disturbance.
pub fn realized_row_value(
    rows: &SafetyRows,
    resp: &ResponseOperators,
    phi_u: &DMatrix<f64>,
    w: &DVector<f64>,
    i: usize,
) -> f64 {
    let u = phi_u * w;
    let x = &resp.f * &u + &resp.g * w;
    (rows.h_x.row(i) * x)[0] + (rows.h_u.row(i) * u)[0]
}
