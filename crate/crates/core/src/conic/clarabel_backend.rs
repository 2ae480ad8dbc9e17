//! Adapter to the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT,
    SolverStatus as ClarabelStatus, SupportedConeT,
};
use nalgebra::DVector;

use super::{Cone, ConicBackend, ConicProblem, ConicSolution, SolverSettings, SolverStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct Clarabel;

/// Position in our `svec` (lower triangle by columns) of each entry of
/// Clarabel's vectorization (upper triangle by columns). Both scale
/// off-diagonals by √2.
fn triu_permutation(d: usize) -> Vec<usize> {
    // Lower column `c` starts after columns 0..c, which hold d, d-1, ... entries.
    let start = |c: usize| (0..c).map(|k| d - k).sum::<usize>();
    let mut perm = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            // Upper (i, j) is lower (j, i): column i, row j.
            perm.push(start(i) + (j - i));
        }
    }
    perm
}

fn map_status(s: ClarabelStatus) -> SolverStatus {
    match s {
        ClarabelStatus::Solved => SolverStatus::Optimal,
        ClarabelStatus::AlmostSolved => SolverStatus::AlmostOptimal,
        ClarabelStatus::PrimalInfeasible | ClarabelStatus::AlmostPrimalInfeasible => SolverStatus::PrimalInfeasible,
        ClarabelStatus::DualInfeasible | ClarabelStatus::AlmostDualInfeasible => SolverStatus::DualInfeasible,
        ClarabelStatus::MaxIterations => SolverStatus::MaxIterations,
        ClarabelStatus::MaxTime => SolverStatus::TimeLimit,
        _ => SolverStatus::NumericalError,
    }
}

impl ConicBackend for Clarabel {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
        if problem.blocks.is_empty() {
            return Err(Error::Invalid("conic problem has no constraints".into()));
        }
        let n = problem.num_vars();
        let mut cones = Vec::with_capacity(problem.blocks.len());
        // Row order per block: entry `r` of the Clarabel block is row `perm[r]` of ours.
        let mut perms: Vec<Option<Vec<usize>>> = Vec::with_capacity(problem.blocks.len());
        let mut b = Vec::new();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut row0 = 0;
        for blk in &problem.blocks {
            let cone = blk.cone();
            let perm = match cone {
                Cone::NonNeg(k) => {
                    cones.push(NonnegativeConeT(k));
                    None
                }
                Cone::Soc(k) => {
                    cones.push(SecondOrderConeT(k));
                    None
                }
                Cone::Psd(d) => {
                    cones.push(PSDTriangleConeT(d));
                    Some(triu_permutation(d))
                }
            };
            let g = blk.dense();
            let h = blk.offset();
            let rows = cone.dim();
            for r in 0..rows {
                let src = perm.as_ref().map_or(r, |p| p[r]);
                b.push(h[src]);
                for (j, col) in cols.iter_mut().enumerate() {
                    let v = g[(src, j)];
                    if v != 0.0 {
                        col.push((row0 + r, v));
                    }
                }
            }
            perms.push(perm);
            row0 += rows;
        }
        let m = row0;
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &cols {
            for &(r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::<f64>::zeros((n, n));

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(settings.verbose)
            .max_iter(settings.max_iter as u32)
            .tol_feas(settings.feastol)
            .tol_gap_abs(settings.abstol)
            .tol_gap_rel(settings.reltol);
        if let Some(t) = settings.time_limit {
            builder.time_limit(t);
        }
        let cfg = builder
            .build()
            .map_err(|e| Error::Invalid(format!("clarabel settings: {e}")))?;
        let cones: Vec<SupportedConeT<f64>> = cones;
        let mut solver = DefaultSolver::new(&p, problem.c.as_slice(), &a, &b, &cones, cfg)
            .map_err(|e| Error::Invalid(format!("clarabel setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let mut s_blocks = Vec::with_capacity(problem.blocks.len());
        let mut z_blocks = Vec::with_capacity(problem.blocks.len());
        let mut off = 0;
        for (blk, perm) in problem.blocks.iter().zip(&perms) {
            let k = blk.cone().dim();
            let mut s = DVector::zeros(k);
            let mut z = DVector::zeros(k);
            for r in 0..k {
                let dst = perm.as_ref().map_or(r, |p| p[r]);
                s[dst] = sol.s[off + r];
                z[dst] = sol.z[off + r];
            }
            s_blocks.push(s);
            z_blocks.push(z);
            off += k;
        }
        Ok(ConicSolution {
            status: map_status(sol.status),
            x: DVector::from_column_slice(&sol.x),
            s: s_blocks,
            z: z_blocks,
            primal_objective: sol.obj_val,
            dual_objective: sol.obj_val_dual,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            iterations: sol.iterations as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_maps_upper_to_lower() {
        // d = 3: ours (0,0),(1,0),(2,0),(1,1),(2,1),(2,2); upper by columns
        // (0,0),(0,1),(1,1),(0,2),(1,2),(2,2).
        assert_eq!(triu_permutation(3), vec![0, 1, 3, 2, 4, 5]);
        let p = triu_permutation(6);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..21).collect::<Vec<_>>());
    }
}
