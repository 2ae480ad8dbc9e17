//! Scenario programs for regret-optimal and worst-case-cost policies.

pub mod lmi;
pub mod safety;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{clairvoyant_policy, ClairvoyantBenchmark, CostWeights};
use crate::conic::{backend_from_env, Cone, ConicBackend, ConicProblem, DenseBlock, SolverSettings, SolverStatus};
use crate::error::{Error, Result};
use crate::lifted::{lift, ResponseOperators, ScenarioSample, UncertainSystem};
use crate::linalg::{max_abs, min_eigenvalue, symmetrize, top_eigenpair};
use crate::regret::{cost_factor, regret_matrix, CausalPolicy};
use crate::structure::{count_decision_variables, DecisionVariableCount, PolicyStructure, VariableLayout};

pub use lmi::{assemble_hinf_lmi, assemble_regret_lmi, LmiForm, StructuredLmi};
pub use safety::{assemble_safety_soc, realized_row_value, row_lhs_values, FixedSafety, SafetyRows, SafetySpec, SocRow};

/// Post-solve slack allowed on PSD eigenvalues and SOC rows, relative to
/// `max(1, scale)`.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Regret,
    Hinf,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Regret => "regret",
            Objective::Hinf => "hinf",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "regret" => Ok(Self::Regret),
            "hinf" => Ok(Self::Hinf),
            other => Err(format!("unknown objective `{other}` (expected regret|hinf)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub structure: PolicyStructure,
    pub lmi_form: LmiForm,
    pub solver: SolverSettings,
    /// Add one shared nonnegative slack to every safety row.
    pub relax_safety: bool,
    pub slack_penalty: f64,
    /// Relative distance from `γ*` within which a scenario counts as active.
    pub active_tol: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            structure: PolicyStructure::Full,
            lmi_form: LmiForm::Compact,
            solver: SolverSettings::default(),
            relax_safety: false,
            slack_penalty: 1e4,
            active_tol: 1e-6,
        }
    }
}

impl SynthesisOptions {
    pub fn with_structure(structure: PolicyStructure) -> Self {
        Self {
            structure,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub policy: CausalPolicy,
    /// `max_k λ_max` of the per-scenario objective matrix at the returned policy.
    pub gamma_star: f64,
    /// Value of the epigraph variable reported by the solver.
    pub gamma_solver: f64,
    pub objective: Objective,
    pub dataset_id: String,
    pub num_scenarios: usize,
    pub solver: String,
    pub solver_status: SolverStatus,
    pub iterations: usize,
    pub wall_clock: f64,
    pub active_scenarios: Vec<usize>,
    /// Per-scenario `λ_max` at the returned policy.
    pub scenario_values: Vec<f64>,
    pub decision_variables: DecisionVariableCount,
    /// Shared safety slack (only with `relax_safety`).
    pub safety_slack: Option<f64>,
    /// Largest safety-row excess `lhs - h` over the dataset (0 without safety).
    pub max_safety_excess: f64,
}

/// Stable identifier of a dataset: SHA-256 over the raw parameter values.
pub fn dataset_id(dataset: &[ScenarioSample]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((dataset.len() as u64).to_le_bytes());
    for s in dataset {
        hasher.update((s.len() as u64).to_le_bytes());
        for th in s.steps() {
            hasher.update((th.len() as u64).to_le_bytes());
            for v in th.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

/// Lifted data for one scenario.
pub struct ScenarioData {
    pub resp: ResponseOperators,
    pub bench: ClairvoyantBenchmark,
    pub safety: Option<SafetyRows>,
}

/// Lift every sample and compute its benchmark, in parallel.
pub fn prepare_scenarios(
    dataset: &[ScenarioSample],
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
) -> Result<Vec<ScenarioData>> {
    weights.check(&system.dims)?;
    dataset
        .par_iter()
        .map(|s| {
            let (_, resp) = lift(system, s)?;
            let bench = clairvoyant_policy(&resp, weights)?;
            let safety = safety.map(|sp| sp.rows(s)).transpose()?;
            Ok(ScenarioData { resp, bench, safety })
        })
        .collect()
}

/// Conic program plus the bookkeeping needed to read its solution.
pub struct ScenarioProgram {
    pub problem: ConicProblem,
    pub layout: Arc<VariableLayout>,
    pub gamma_index: usize,
    pub slack_index: Option<usize>,
    pub soc_rows: Vec<Vec<SocRow>>,
}

/// Assemble the scenario program: minimize `γ` subject to one LMI per
/// scenario and, when present, one SOC row per safety face and scenario.
pub fn build_program(
    scenarios: &[ScenarioData],
    weights: &CostWeights,
    objective: Objective,
    options: &SynthesisOptions,
) -> Result<ScenarioProgram> {
    let first = scenarios
        .first()
        .ok_or_else(|| Error::Invalid("scenario dataset is empty".into()))?;
    let dims = first.resp.dims;
    let layout = Arc::new(VariableLayout::new(dims, options.structure));
    let nf = layout.num_free();
    let has_safety = scenarios.iter().any(|s| s.safety.as_ref().is_some_and(|r| !r.h.is_empty()));
    let gamma_index = nf;
    let slack_index = (has_safety && options.relax_safety).then_some(nf + 1);
    let num_vars = nf + 1 + usize::from(slack_index.is_some());

    let mut c = DVector::zeros(num_vars);
    c[gamma_index] = 1.0;
    if let Some(k) = slack_index {
        c[k] = options.slack_penalty;
    }
    let mut problem = ConicProblem::new(c);

    let blocks: Vec<StructuredLmi> = scenarios
        .par_iter()
        .map(|s| match objective {
            Objective::Regret => {
                assemble_regret_lmi(layout.clone(), &s.bench, &s.resp, weights, gamma_index, num_vars, options.lmi_form)
            }
            Objective::Hinf => {
                assemble_hinf_lmi(layout.clone(), &s.bench, &s.resp, weights, gamma_index, num_vars, options.lmi_form)
            }
        })
        .collect::<Result<_>>()?;
    for b in blocks {
        problem.push(Box::new(b))?;
    }

    let soc_rows: Vec<Vec<SocRow>> = scenarios
        .par_iter()
        .map(|s| match &s.safety {
            Some(rows) => assemble_safety_soc(&layout, rows, &s.resp),
            None => Ok(Vec::new()),
        })
        .collect::<Result<_>>()?;
    for (k, rows) in soc_rows.iter().enumerate() {
        for (i, row) in rows.iter().enumerate() {
            if slack_index.is_none() && row.is_constant() && row.lhs(&vec![0.0; nf]) > row.bound {
                return Err(Error::Infeasible(format!(
                    "safety row {i} of scenario {k} cannot be met by any policy"
                )));
            }
            problem.push(Box::new(row.to_block(num_vars, slack_index)?))?;
        }
    }
    if let Some(k) = slack_index {
        let mut g = DMatrix::zeros(1, num_vars);
        g[(0, k)] = -1.0;
        problem.push(Box::new(DenseBlock::new(Cone::NonNeg(1), g, DVector::zeros(1))?))?;
    }
    Ok(ScenarioProgram {
        problem,
        layout,
        gamma_index,
        slack_index,
        soc_rows,
    })
}

/// `λ_max` of the objective matrix for one scenario at `phi_u`.
pub fn scenario_value(
    objective: Objective,
    phi_u: &DMatrix<f64>,
    data: &ScenarioData,
    weights: &CostWeights,
) -> Result<f64> {
    let m = match objective {
        Objective::Regret => regret_matrix(phi_u, &data.bench, &data.resp, weights)?,
        Objective::Hinf => {
            let f = cost_factor(phi_u, &data.resp, weights)?;
            symmetrize(&(f.transpose() * f))
        }
    };
    Ok(top_eigenpair(&m)?.0)
}

pub fn solve_scenario_regret(
    dataset: &[ScenarioSample],
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    solve_scenario_program(dataset, system, weights, safety, Objective::Regret, options)
}

pub fn solve_scenario_hinf(
    dataset: &[ScenarioSample],
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    solve_scenario_program(dataset, system, weights, safety, Objective::Hinf, options)
}

pub fn solve_scenario_program(
    dataset: &[ScenarioSample],
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    objective: Objective,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let backend = backend_from_env()?;
    solve_with_backend(backend.as_ref(), dataset, system, weights, safety, objective, options)
}

pub fn solve_with_backend(
    backend: &dyn ConicBackend,
    dataset: &[ScenarioSample],
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    objective: Objective,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    if dataset.is_empty() {
        return Err(Error::Invalid("scenario dataset is empty".into()));
    }
    let start = Instant::now();
    let scenarios = prepare_scenarios(dataset, system, weights, safety)?;
    let program = build_program(&scenarios, weights, objective, options)?;
    let sol = backend.solve(&program.problem, &options.solver)?;
    match sol.status {
        SolverStatus::Optimal | SolverStatus::AlmostOptimal => {}
        SolverStatus::PrimalInfeasible => {
            return Err(Error::Infeasible(
                "no causal policy satisfies the sampled safety constraints".into(),
            ))
        }
        status => {
            return Err(Error::SolverFailure {
                status: status.to_string(),
                detail: format!(
                    "primal residual {:.2e}, dual residual {:.2e} after {} iterations",
                    sol.primal_residual, sol.dual_residual, sol.iterations
                ),
            })
        }
    }
    let wall_clock = start.elapsed().as_secs_f64();

    let nf = program.layout.num_free();
    let vars = &sol.x.as_slice()[..nf];
    let policy = CausalPolicy::from_variables(&program.layout, vars);
    let gamma_solver = sol.x[program.gamma_index];
    let slack = program.slack_index.map(|k| sol.x[k].max(0.0));

    // Feasibility audit of the returned point.
    let tol = FEASIBILITY_TOL * gamma_solver.abs().max(1.0);
    let min_eigs: Vec<f64> = program
        .problem
        .blocks
        .par_iter()
        .take(scenarios.len())
        .map(|b| {
            let mut gx = vec![0.0; b.cone().dim()];
            b.apply(sol.x.as_slice(), &mut gx);
            let Cone::Psd(d) = b.cone() else { unreachable!() };
            let v: Vec<f64> = b.offset().iter().zip(&gx).map(|(h, g)| h - g).collect();
            let m = crate::linalg::smat(&v, d);
            min_eigenvalue(&m)
        })
        .collect::<Result<_>>()?;
    if let Some((k, e)) = min_eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .filter(|(_, e)| **e < -tol)
    {
        return Err(Error::SolverFailure {
            status: sol.status.to_string(),
            detail: format!("scenario {k} block has eigenvalue {e:.3e} below tolerance"),
        });
    }
    let mut max_excess = 0.0_f64;
    for rows in &program.soc_rows {
        for row in rows {
            let excess = row.lhs(vars) - row.bound - slack.unwrap_or(0.0);
            if excess > FEASIBILITY_TOL * row.bound.abs().max(1.0) {
                return Err(Error::SolverFailure {
                    status: sol.status.to_string(),
                    detail: format!("safety row exceeded by {excess:.3e}"),
                });
            }
            max_excess = max_excess.max(row.lhs(vars) - row.bound);
        }
    }

    let scenario_values: Vec<f64> = scenarios
        .par_iter()
        .map(|s| scenario_value(objective, policy.phi_u(), s, weights))
        .collect::<Result<_>>()?;
    let gamma_star = scenario_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = gamma_star - options.active_tol * gamma_star.abs().max(1.0);
    let active_scenarios = scenario_values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= cut)
        .map(|(k, _)| k)
        .collect();

    debug_assert!(max_abs(policy.phi_u()).is_finite());
    Ok(SynthesisResult {
        decision_variables: count_decision_variables(&system.dims, options.structure),
        policy,
        gamma_star,
        gamma_solver,
        objective,
        dataset_id: dataset_id(dataset),
        num_scenarios: dataset.len(),
        solver: backend.name().to_string(),
        solver_status: sol.status,
        iterations: sol.iterations,
        wall_clock,
        active_scenarios,
        scenario_values,
        safety_slack: slack,
        max_safety_excess: max_excess,
    })
}
