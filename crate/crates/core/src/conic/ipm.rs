//! Homogeneous self-dual primal-dual interior-point method with
//! Nesterov–Todd scaling and a Mehrotra predictor-corrector.
//!
//! The Newton systems are reduced to the normal equations
//! `Σ_k (W_k^{-T} G_k)ᵀ (W_k^{-T} G_k) Δx = r`, assembled block by block.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::scaling::{cone_identity, cone_min_eig, ConeScaling};
use super::{ConicBackend, ConicProblem, ConicSolution, SolverSettings, SolverStatus};
use crate::error::{Error, Result};
use crate::linalg::gram_add;

/// Blocks per parallel work item; partial sums are combined in order so the
/// result does not depend on the thread count.
const CHUNK: usize = 8;

/// Tolerance multiplier under which a stalled run is reported as almost optimal.
const ALMOST: f64 = 1e3;

/// Refinement passes on the first KKT block row.
const KKT_REFINE: usize = 3;

#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn name(&self) -> &'static str {
        "ipm"
    }

    fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
        Solver::new(problem, settings).run()
    }
}

struct Solver<'a> {
    p: &'a ConicProblem,
    settings: &'a SolverSettings,
    offsets: Vec<usize>,
    total: usize,
    degree: usize,
    h: DVector<f64>,
    hnorm: f64,
    cnorm: f64,
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

#[derive(Debug, Clone, Copy)]
struct Metrics {
    pres: f64,
    dres: f64,
    pcost: f64,
    dcost: f64,
    gap: f64,
    relgap: f64,
}

impl Metrics {
    fn score(&self, st: &SolverSettings) -> f64 {
        let g = (self.gap / st.abstol).min(self.relgap / st.reltol);
        (self.pres / st.feastol).max(self.dres / st.feastol).max(g)
    }
}

struct Direction {
    dx: DVector<f64>,
    ds: DVector<f64>,
    dz: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

impl<'a> Solver<'a> {
    fn new(p: &'a ConicProblem, settings: &'a SolverSettings) -> Self {
        let mut offsets = Vec::with_capacity(p.blocks.len());
        let mut total = 0;
        let mut degree = 0;
        for b in &p.blocks {
            offsets.push(total);
            total += b.cone().dim();
            degree += b.cone().degree();
        }
        let mut h = DVector::zeros(total);
        for (b, &o) in p.blocks.iter().zip(&offsets) {
            h.rows_mut(o, b.cone().dim()).copy_from(b.offset());
        }
        let hnorm = h.norm().max(1.0);
        let cnorm = p.c.norm().max(1.0);
        Self {
            p,
            settings,
            offsets,
            total,
            degree,
            h,
            hnorm,
            cnorm,
        }
    }

    fn range(&self, k: usize) -> std::ops::Range<usize> {
        let o = self.offsets[k];
        o..o + self.p.blocks[k].cone().dim()
    }

    fn apply_g(&self, x: &DVector<f64>) -> DVector<f64> {
        let parts: Vec<DVector<f64>> = self
            .p
            .blocks
            .par_iter()
            .map(|b| {
                let mut out = DVector::zeros(b.cone().dim());
                b.apply(x.as_slice(), out.as_mut_slice());
                out
            })
            .collect();
        let mut out = DVector::zeros(self.total);
        for (k, part) in parts.iter().enumerate() {
            out.rows_mut(self.offsets[k], part.len()).copy_from(part);
        }
        out
    }

    fn apply_gt(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.p.num_vars();
        let idx: Vec<usize> = (0..self.p.blocks.len()).collect();
        let parts: Vec<DVector<f64>> = idx
            .par_chunks(CHUNK)
            .map(|ks| {
                let mut acc = DVector::zeros(n);
                for &k in ks {
                    let r = self.range(k);
                    self.p.blocks[k].apply_adjoint_add(&y.as_slice()[r], acc.as_mut_slice());
                }
                acc
            })
            .collect();
        parts.into_iter().fold(DVector::zeros(n), |a, b| a + b)
    }

    /// Apply a per-block map to a concatenated vector.
    fn blockwise<F>(&self, scalings: &[ConeScaling], v: &DVector<f64>, f: F) -> DVector<f64>
    where
        F: Fn(&ConeScaling, &[f64]) -> DVector<f64> + Sync,
    {
        let parts: Vec<DVector<f64>> = scalings
            .par_iter()
            .enumerate()
            .map(|(k, sc)| f(sc, &v.as_slice()[self.range(k)]))
            .collect();
        let mut out = DVector::zeros(self.total);
        for (k, part) in parts.iter().enumerate() {
            out.rows_mut(self.offsets[k], part.len()).copy_from(part);
        }
        out
    }

    fn blockwise2<F>(&self, scalings: &[ConeScaling], u: &DVector<f64>, v: &DVector<f64>, f: F) -> DVector<f64>
    where
        F: Fn(&ConeScaling, &[f64], &[f64]) -> DVector<f64> + Sync,
    {
        let parts: Vec<DVector<f64>> = scalings
            .par_iter()
            .enumerate()
            .map(|(k, sc)| {
                let r = self.range(k);
                f(sc, &u.as_slice()[r.clone()], &v.as_slice()[r])
            })
            .collect();
        let mut out = DVector::zeros(self.total);
        for (k, part) in parts.iter().enumerate() {
            out.rows_mut(self.offsets[k], part.len()).copy_from(part);
        }
        out
    }

    fn normal_matrix(&self, scalings: &[ConeScaling]) -> DMatrix<f64> {
        let n = self.p.num_vars();
        let idx: Vec<usize> = (0..self.p.blocks.len()).collect();
        let parts: Vec<DMatrix<f64>> = idx
            .par_chunks(CHUNK)
            .map(|ks| {
                let mut acc = DMatrix::zeros(n, n);
                for &k in ks {
                    let gh = self.p.blocks[k].scaled_matrix(&scalings[k]);
                    gram_add(&gh, &mut acc);
                }
                acc
            })
            .collect();
        let mut m = DMatrix::zeros(n, n);
        for part in parts {
            m += part;
        }
        m
    }

    fn factor(&self, mut m: DMatrix<f64>) -> Option<Factor> {
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)]).fold(1.0_f64, f64::max);
        let plain = m.clone();
        for i in 0..n {
            m[(i, i)] += 1e-13 * scale;
        }
        let chol = m.cholesky()?;
        Some(Factor { chol, plain })
    }

    /// Solve `[0 Gᵀ; G -WᵀW] (Δx, Δz) = (bx, bz)` given `bz_hat = W^{-T} bz`;
    /// returns `(Δx, W Δz)`.
    fn kkt(
        &self,
        f: &Factor,
        scalings: &[ConeScaling],
        bx: &DVector<f64>,
        bz_hat: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dz) = self.kkt_once(f, scalings, bx, bz_hat);
        // The second block row holds by construction; refine the first.
        let zero = DVector::zeros(self.total);
        let bnorm = bx.norm().max(1e-300);
        for _ in 0..KKT_REFINE {
            let r = bx - self.apply_gt(&self.blockwise(scalings, &dz, |s, v| s.apply_winv(v)));
            if r.norm() <= 1e-14 * bnorm {
                break;
            }
            let (cx, cz) = self.kkt_once(f, scalings, &r, &zero);
            dx += cx;
            dz += cz;
        }
        (dx, dz)
    }

    fn kkt_once(
        &self,
        f: &Factor,
        scalings: &[ConeScaling],
        bx: &DVector<f64>,
        bz_hat: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let rhs = bx + self.apply_gt(&self.blockwise(scalings, bz_hat, |s, v| s.apply_winv(v)));
        let mut dx = f.chol.solve(&rhs);
        let res = &rhs - &f.plain * &dx;
        dx += f.chol.solve(&res);
        let gdx = self.blockwise(scalings, &self.apply_g(&dx), |s, v| s.apply_wit(v));
        (dx, gdx - bz_hat)
    }

    fn metrics(&self, it: &Iterate, gx: &DVector<f64>, gtz: &DVector<f64>) -> Metrics {
        let tau = it.tau;
        let rz = &it.s + gx - &self.h * tau;
        let rx = gtz + &self.p.c * tau;
        let pcost = self.p.c.dot(&it.x) / tau;
        let dcost = -self.h.dot(&it.z) / tau;
        let gap = it.s.dot(&it.z) / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        Metrics {
            pres: rz.norm() / tau / self.hnorm.max(gx.norm() / tau).max(it.s.norm() / tau),
            dres: rx.norm() / tau / self.cnorm.max(gtz.norm() / tau),
            pcost,
            dcost,
            gap,
            relgap,
        }
    }

    fn initial_point(&self) -> Result<Iterate> {
        let scalings: Vec<ConeScaling> = self.p.blocks.iter().map(|b| ConeScaling::identity(b.cone())).collect();
        let f = self
            .factor(self.normal_matrix(&scalings))
            .ok_or_else(|| Error::NumericalFailure("constraint map has dependent columns".into()))?;
        let rhs = self.apply_gt(&self.h);
        let mut x = f.chol.solve(&rhs);
        x += f.chol.solve(&(&rhs - &f.plain * &x));
        let mut s = &self.h - self.apply_g(&x);
        let xz = f.chol.solve(&(-&self.p.c));
        let mut z = self.apply_g(&xz);
        for v in [&mut s, &mut z] {
            let min_eig = self
                .p
                .blocks
                .iter()
                .enumerate()
                .map(|(k, b)| cone_min_eig(b.cone(), &v.as_slice()[self.range(k)]))
                .fold(f64::INFINITY, f64::min);
            if min_eig <= 0.0 || !min_eig.is_finite() {
                let shift = 1.0 - min_eig.min(0.0);
                let shift = if shift.is_finite() { shift } else { 1.0 };
                for (k, b) in self.p.blocks.iter().enumerate() {
                    let e = cone_identity(b.cone());
                    let mut r = v.rows_mut(self.offsets[k], e.len());
                    r += e * shift;
                }
            }
        }
        Ok(Iterate {
            x,
            s,
            z,
            tau: 1.0,
            kappa: 1.0,
        })
    }

    fn solution(&self, it: &Iterate, status: SolverStatus, m: Option<Metrics>, iterations: usize) -> ConicSolution {
        let tau = if it.tau > 0.0 { it.tau } else { 1.0 };
        let split = |v: &DVector<f64>| -> Vec<DVector<f64>> {
            (0..self.p.blocks.len())
                .map(|k| DVector::from_column_slice(&v.as_slice()[self.range(k)]) / tau)
                .collect()
        };
        let (pres, dres, pcost, dcost) = m.map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN), |m| {
            (m.pres, m.dres, m.pcost, m.dcost)
        });
        ConicSolution {
            status,
            x: &it.x / tau,
            s: split(&it.s),
            z: split(&it.z),
            primal_objective: pcost,
            dual_objective: dcost,
            primal_residual: pres,
            dual_residual: dres,
            iterations,
        }
    }

    fn certificate(&self, it: &Iterate, status: SolverStatus, iterations: usize) -> ConicSolution {
        // Infeasibility certificates are returned unnormalized by τ.
        let mut it = it.clone();
        it.tau = 1.0;
        self.solution(&it, status, None, iterations)
    }

    fn max_step(&self, scalings: &[ConeScaling], ds: &DVector<f64>, dz: &DVector<f64>, it: &Iterate, d: &Direction) -> f64 {
        let per_block: f64 = scalings
            .par_iter()
            .enumerate()
            .map(|(k, sc)| {
                let r = self.range(k);
                sc.max_step(&ds.as_slice()[r.clone()]).min(sc.max_step(&dz.as_slice()[r]))
            })
            .reduce(|| f64::INFINITY, f64::min);
        let mut a = per_block;
        if d.dtau < 0.0 {
            a = a.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-it.kappa / d.dkappa);
        }
        a
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        f: &Factor,
        scalings: &[ConeScaling],
        it: &Iterate,
        first: &(DVector<f64>, DVector<f64>),
        hhat: &DVector<f64>,
        residuals: &(DVector<f64>, DVector<f64>, f64),
        rho: f64,
        q: &DVector<f64>,
        qk: f64,
    ) -> Direction {
        let (rx, rz, rt) = residuals;
        let bx = -rx * rho;
        let bz_hat = self.blockwise(scalings, &(-rz * rho), |s, v| s.apply_wit(v)) - q;
        let (x2, dz2) = self.kkt(f, scalings, &bx, &bz_hat);
        let (x1, dz1) = first;
        let num = -rho * rt - qk / it.tau - self.p.c.dot(&x2) - hhat.dot(&dz2);
        let den = self.p.c.dot(x1) + hhat.dot(dz1) - it.kappa / it.tau;
        let dtau = num / den;
        let dx = x2 + x1 * dtau;
        let dz = dz2 + dz1 * dtau;
        let ds = q - &dz;
        let dkappa = (qk - it.kappa * dtau) / it.tau;
        Direction {
            dx,
            ds,
            dz,
            dtau,
            dkappa,
        }
    }

    fn run(&self) -> Result<ConicSolution> {
        let st = self.settings;
        if self.p.blocks.is_empty() {
            return Err(Error::Invalid("conic problem has no constraints".into()));
        }
        let mut it = self.initial_point()?;
        let mut best: Option<(f64, Iterate, Metrics)> = None;
        let mut stalls = 0;
        let mut iters = 0;
        let start = std::time::Instant::now();
        let mut timed_out = false;

        for iter in 0..st.max_iter {
            if st.time_limit.is_some_and(|limit| start.elapsed().as_secs_f64() > limit) {
                timed_out = true;
                break;
            }
            iters = iter + 1;
            let gx = self.apply_g(&it.x);
            let gtz = self.apply_gt(&it.z);
            let m = self.metrics(&it, &gx, &gtz);
            if st.verbose {
                eprintln!(
                    "{iter:3} pcost {:+.8e} dcost {:+.8e} gap {:.2e} pres {:.2e} dres {:.2e} tau {:.2e} kappa {:.2e}",
                    m.pcost, m.dcost, m.gap, m.pres, m.dres, it.tau, it.kappa
                );
            }
            if m.pres <= st.feastol && m.dres <= st.feastol && (m.gap <= st.abstol || m.relgap <= st.reltol) {
                return Ok(self.solution(&it, SolverStatus::Optimal, Some(m), iter));
            }
            let score = m.score(st);
            if score.is_finite() && best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, it.clone(), m));
            }

            let htz = self.h.dot(&it.z);
            if htz < 0.0 && gtz.norm() / self.cnorm / -htz <= st.feastol {
                return Ok(self.certificate(&it, SolverStatus::PrimalInfeasible, iter));
            }
            let ctx = self.p.c.dot(&it.x);
            if ctx < 0.0 && (&gx + &it.s).norm() / self.hnorm / -ctx <= st.feastol {
                return Ok(self.certificate(&it, SolverStatus::DualInfeasible, iter));
            }

            let scalings: Option<Vec<ConeScaling>> = self
                .p
                .blocks
                .par_iter()
                .enumerate()
                .map(|(k, b)| {
                    let r = self.range(k);
                    ConeScaling::new(b.cone(), &it.s.as_slice()[r.clone()], &it.z.as_slice()[r])
                })
                .collect();
            let Some(scalings) = scalings else {
                break;
            };
            let Some(factor) = self.factor(self.normal_matrix(&scalings)) else {
                break;
            };

            let lambda = self.blockwise(&scalings, &DVector::zeros(self.total), |s, _| s.lambda());
            let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (self.degree as f64 + 1.0);
            let residuals = (gtz + &self.p.c * it.tau, &it.s + gx - &self.h * it.tau, it.kappa + ctx + htz);
            let hhat = self.blockwise(&scalings, &self.h, |s, v| s.apply_wit(v));
            let first = self.kkt(&factor, &scalings, &(-&self.p.c), &hhat);

            // Predictor.
            let q = -&lambda;
            let qk = -it.tau * it.kappa;
            let aff = self.direction(&factor, &scalings, &it, &first, &hhat, &residuals, 1.0, &q, qk);
            let alpha_aff = self.max_step(&scalings, &aff.ds, &aff.dz, &it, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);

            // Corrector.
            let ll = self.blockwise2(&scalings, &lambda, &lambda, |s, a, b| s.jordan(a, b));
            let cross = self.blockwise2(&scalings, &aff.ds, &aff.dz, |s, a, b| s.jordan(a, b));
            let e = self.blockwise(&scalings, &DVector::zeros(self.total), |s, _| match s {
                ConeScaling::NonNeg { w, .. } => cone_identity(super::Cone::NonNeg(w.len())),
                ConeScaling::Soc { wbar, .. } => cone_identity(super::Cone::Soc(wbar.len())),
                ConeScaling::Psd { order, .. } => cone_identity(super::Cone::Psd(*order)),
            });
            let xi = -ll - cross + e * (sigma * mu);
            let q = self.blockwise(&scalings, &xi, |s, v| s.lambda_div(v));
            let qk = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
            let d = self.direction(&factor, &scalings, &it, &first, &hhat, &residuals, 1.0 - sigma, &q, qk);
            // Take Δs from the linearized primal equation in unscaled coordinates.
            let ds_raw = &self.h * d.dtau - self.apply_g(&d.dx) - &residuals.1 * (1.0 - sigma);
            let mut d = d;
            d.ds = self.blockwise(&scalings, &ds_raw, |s, v| s.apply_wit(v));
            let alpha = (st.step_fraction * self.max_step(&scalings, &d.ds, &d.dz, &it, &d)).min(1.0);
            if !(alpha > 1e-10) || !d.dtau.is_finite() {
                stalls += 1;
                if stalls >= 2 {
                    break;
                }
                continue;
            }

            it.x += &d.dx * alpha;
            it.s += ds_raw * alpha;
            it.z += self.blockwise(&scalings, &d.dz, |s, v| s.apply_winv(v)) * alpha;
            it.tau += alpha * d.dtau;
            it.kappa += alpha * d.dkappa;
            if !(it.tau > 0.0 && it.kappa > 0.0) {
                break;
            }
            // Renormalize the homogeneous iterate to keep magnitudes bounded.
            let scale = it.tau.max(it.kappa).max(1e-300);
            if !(1e-8..=1e8).contains(&scale) {
                it.x /= scale;
                it.s /= scale;
                it.z /= scale;
                it.tau /= scale;
                it.kappa /= scale;
            }
        }

        match best {
            Some((score, b, m)) if score <= ALMOST => Ok(self.solution(&b, SolverStatus::AlmostOptimal, Some(m), iters)),
            Some((_, b, m)) => {
                let status = if timed_out {
                    SolverStatus::TimeLimit
                } else if stalls >= 2 {
                    SolverStatus::NumericalError
                } else {
                    SolverStatus::MaxIterations
                };
                Ok(self.solution(&b, status, Some(m), iters))
            }
            None => Ok(self.solution(&it, SolverStatus::NumericalError, None, iters)),
        }
    }
}

struct Factor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    plain: DMatrix<f64>,
}
