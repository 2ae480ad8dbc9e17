//! Per-scenario linear matrix inequality in the policy variables and `γ`.
//!
//! Every form is written as
//!
//! ```text
//! [ I      LΦ + C ]
//! [ (·)ᵀ   γI + D ]  ⪰ 0
//! ```
//!
//! whose Schur complement is `γI + D - (LΦ + C)ᵀ(LΦ + C) ⪰ 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmark::{ClairvoyantBenchmark, CostWeights};
use crate::conic::{Cone, ConeBlock, ConeScaling};
use crate::error::{Error, Result};
use crate::lifted::ResponseOperators;
use crate::linalg::{svec, svec_into, svec_len, symmetrize};
use crate::structure::VariableLayout;

/// How the cost factor enters the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LmiForm {
    /// `L = [sqrtQ F; sqrtR]`, `C = [sqrtQ G; 0]`; block order `nT + mT + w`.
    Expanded,
    /// `L` is the Cholesky factor of `R + F'QF` and `C = -L Ψ_u`; block order `mT + w`.
    #[default]
    Compact,
}

/// Structured PSD block for one scenario.
pub struct StructuredLmi {
    layout: Arc<VariableLayout>,
    gamma_index: usize,
    num_vars: usize,
    l: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    h: DVector<f64>,
}

impl std::fmt::Debug for StructuredLmi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StructuredLmi")
            .field("rows", &self.l.nrows())
            .field("w", &self.d.nrows())
            .field("num_vars", &self.num_vars)
            .finish()
    }
}

impl StructuredLmi {
    fn new(
        layout: Arc<VariableLayout>,
        gamma_index: usize,
        num_vars: usize,
        l: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Self {
        let (q, w) = (l.nrows(), d.nrows());
        let mut h = DMatrix::zeros(q + w, q + w);
        h.view_mut((0, 0), (q, q)).fill_with_identity();
        h.view_mut((0, q), (q, w)).copy_from(&c);
        h.view_mut((q, 0), (w, q)).copy_from(&c.transpose());
        h.view_mut((q, q), (w, w)).copy_from(&symmetrize(&d));
        Self {
            layout,
            gamma_index,
            num_vars,
            l,
            c,
            d,
            h: svec(&h),
        }
    }

    pub fn order(&self) -> usize {
        self.l.nrows() + self.d.nrows()
    }

    /// The block evaluated at the given policy variables and `γ`.
    pub fn matrix(&self, policy_vars: &[f64], gamma: f64) -> DMatrix<f64> {
        let phi = self.layout.assemble(policy_vars);
        let (q, w) = (self.l.nrows(), self.d.nrows());
        let top = &self.l * phi + &self.c;
        let mut m = DMatrix::zeros(q + w, q + w);
        m.view_mut((0, 0), (q, q)).fill_with_identity();
        m.view_mut((0, q), (q, w)).copy_from(&top);
        m.view_mut((q, 0), (w, q)).copy_from(&top.transpose());
        let mut br = symmetrize(&self.d);
        for i in 0..w {
            br[(i, i)] += gamma;
        }
        m.view_mut((q, q), (w, w)).copy_from(&br);
        m
    }

    fn policy_part(&self, x: &[f64]) -> DMatrix<f64> {
        self.layout.assemble(&x[..self.layout.num_free()])
    }
}

impl ConeBlock for StructuredLmi {
    fn cone(&self) -> Cone {
        Cone::Psd(self.order())
    }

    fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn offset(&self) -> &DVector<f64> {
        &self.h
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (q, w) = (self.l.nrows(), self.d.nrows());
        let lp = &self.l * self.policy_part(x);
        let mut m = DMatrix::zeros(q + w, q + w);
        m.view_mut((0, q), (q, w)).copy_from(&(-&lp));
        m.view_mut((q, 0), (w, q)).copy_from(&(-lp.transpose()));
        let g = x[self.gamma_index];
        for i in 0..w {
            m[(q + i, q + i)] = -g;
        }
        svec_into(&m, out);
    }

    fn apply_adjoint_add(&self, y: &[f64], out: &mut [f64]) {
        let (q, w) = (self.l.nrows(), self.d.nrows());
        let ym = crate::linalg::smat(y, q + w);
        let lt_y12 = self.l.transpose() * ym.view((0, q), (q, w));
        for (v, o) in out.iter_mut().enumerate().take(self.layout.num_free()) {
            *o -= 2.0 * self.layout.entries(v).iter().map(|&e| lt_y12[e]).sum::<f64>();
        }
        out[self.gamma_index] -= (0..w).map(|i| ym[(q + i, q + i)]).sum::<f64>();
    }

    fn scaled_matrix(&self, scaling: &ConeScaling) -> DMatrix<f64> {
        let ConeScaling::Psd { rti, .. } = scaling else {
            unreachable!("LMI block paired with a non-PSD scaling");
        };
        let (q, w) = (self.l.nrows(), self.d.nrows());
        let dim = q + w;
        // W^{-T}(U) = rtiᵀ U rti, so a column e_r e_cᵀ of the top-right block
        // maps to ã b̃ᵀ + b̃ ãᵀ with ã = rtiᵀ[L e_r; 0], b̃ = rtiᵀ[0; e_c].
        let a_t = rti.rows(0, q).transpose() * &self.l;
        let b_t: DMatrix<f64> = rti.rows(q, w).transpose();
        let mut out = DMatrix::zeros(svec_len(dim), self.num_vars);
        let mut y = DMatrix::zeros(dim, dim);
        let s2 = std::f64::consts::SQRT_2;
        let write = |y: &DMatrix<f64>, col: &mut [f64], sym: bool| {
            let mut k = 0;
            for j in 0..dim {
                col[k] = if sym { -2.0 * y[(j, j)] } else { -y[(j, j)] };
                k += 1;
                for i in j + 1..dim {
                    col[k] = if sym {
                        -s2 * (y[(i, j)] + y[(j, i)])
                    } else {
                        -s2 * y[(i, j)]
                    };
                    k += 1;
                }
            }
        };
        for v in 0..self.layout.num_free() {
            y.fill(0.0);
            for &(r, c) in self.layout.entries(v) {
                y.ger(1.0, &a_t.column(r), &b_t.column(c), 1.0);
            }
            write(&y, out.column_mut(v).as_mut_slice(), true);
        }
        let bb = &b_t * b_t.transpose();
        write(&bb, out.column_mut(self.gamma_index).as_mut_slice(), false);
        out
    }
}

fn check_sample(bench: &ClairvoyantBenchmark, resp: &ResponseOperators) -> Result<()> {
    if bench.sample != resp.sample {
        return Err(Error::SampleMismatch);
    }
    Ok(())
}

fn benchmark_factor_gram(bench: &ClairvoyantBenchmark, weights: &CostWeights) -> DMatrix<f64> {
    let a = weights.sqrt_q() * &bench.psi_x;
    let b = weights.sqrt_r() * &bench.psi_u;
    symmetrize(&(a.transpose() * a + b.transpose() * b))
}

fn expanded_factor(resp: &ResponseOperators, weights: &CostWeights) -> (DMatrix<f64>, DMatrix<f64>) {
    let (nx, nu, nw) = (resp.dims.x_dim(), resp.dims.u_dim(), resp.dims.w_dim());
    let mut l = DMatrix::zeros(nx + nu, nu);
    l.rows_mut(0, nx).copy_from(&(weights.sqrt_q() * &resp.f));
    l.rows_mut(nx, nu).copy_from(weights.sqrt_r());
    let mut c = DMatrix::zeros(nx + nu, nw);
    c.rows_mut(0, nx).copy_from(&(weights.sqrt_q() * &resp.g));
    (l, c)
}

fn compact_factor(bench: &ClairvoyantBenchmark) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let chol = bench
        .hessian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("R + F'QF is not positive definite".into()))?;
    let l = chol.l().transpose();
    let c = -(&l * &bench.psi_u);
    Ok((l, c))
}

/// Block enforcing `λ_max(Δ(Φ_u)) ≤ γ` for one scenario.
///
/// Variables are laid out as `[policy variables…, γ at gamma_index, …]`.
pub fn assemble_regret_lmi(
    layout: Arc<VariableLayout>,
    bench: &ClairvoyantBenchmark,
    resp: &ResponseOperators,
    weights: &CostWeights,
    gamma_index: usize,
    num_vars: usize,
    form: LmiForm,
) -> Result<StructuredLmi> {
    check_sample(bench, resp)?;
    weights.check(&resp.dims)?;
    let w = resp.dims.w_dim();
    let (l, c, d) = match form {
        LmiForm::Expanded => {
            let (l, c) = expanded_factor(resp, weights);
            (l, c, benchmark_factor_gram(bench, weights))
        }
        LmiForm::Compact => {
            let (l, c) = compact_factor(bench)?;
            (l, c, DMatrix::zeros(w, w))
        }
    };
    Ok(StructuredLmi::new(layout, gamma_index, num_vars, l, c, d))
}

/// Block enforcing `λ_max(M'M) ≤ γ` (worst-case cost) for one scenario.
pub fn assemble_hinf_lmi(
    layout: Arc<VariableLayout>,
    bench: &ClairvoyantBenchmark,
    resp: &ResponseOperators,
    weights: &CostWeights,
    gamma_index: usize,
    num_vars: usize,
    form: LmiForm,
) -> Result<StructuredLmi> {
    check_sample(bench, resp)?;
    weights.check(&resp.dims)?;
    let w = resp.dims.w_dim();
    let (l, c, d) = match form {
        LmiForm::Expanded => {
            let (l, c) = expanded_factor(resp, weights);
            (l, c, DMatrix::zeros(w, w))
        }
        LmiForm::Compact => {
            let (l, c) = compact_factor(bench)?;
            (l, c, -benchmark_factor_gram(bench, weights))
        }
    };
    Ok(StructuredLmi::new(layout, gamma_index, num_vars, l, c, d))
}
