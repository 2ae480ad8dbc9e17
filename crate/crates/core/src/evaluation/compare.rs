//! Realized-cost comparison of the regret and worst-case-cost policies against
//! the clairvoyant benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::{benchmark_cost, CostWeights};
use crate::certificates::VIOLATION_TOL;
use crate::error::{Error, Result};
use crate::lifted::{ScenarioSample, UncertainSystem};
use crate::regret::realized_cost;
use crate::synthesis::{prepare_scenarios, scenario_value, Objective, ScenarioData, SynthesisResult};

use super::profiles::DisturbanceProfile;
use super::profiles::ProfileKind;

/// Slack on the a-priori cost bounds.
pub const BOUND_TOL: f64 = 1e-6;

/// Stochastic profiles are averaged over this many draws unless configured.
pub const DEFAULT_REALIZATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub theta_id: usize,
    pub profile: ProfileKind,
    pub j_regret: f64,
    pub j_hinf: f64,
    pub j_clairvoyant: f64,
    /// `(J_hinf − J_regret) / J_regret`; `None` when `J_regret = 0`.
    pub delta_j_bar: Option<f64>,
    /// `J_clairvoyant ≤ H̄ − R̄`.
    pub bound_order_holds: bool,
    /// `J_regret − J_clairvoyant ≤ R̄` for every realization.
    pub regret_bound_holds: bool,
    /// `J_hinf ≤ H̄` for every realization.
    pub hinf_bound_holds: bool,
    /// `θ` satisfies the regret policy's scenario constraint.
    pub regret_non_violating: bool,
    /// `θ` satisfies the worst-case-cost policy's scenario constraint.
    pub hinf_non_violating: bool,
    pub unit_norm: bool,
    pub realizations: usize,
    pub se_regret: f64,
    pub se_hinf: f64,
    pub se_clairvoyant: f64,
}

/// Relative cost increase of the worst-case-cost policy, undefined at zero cost.
pub fn relative_increase(j_regret: f64, j_hinf: f64) -> Option<f64> {
    (j_regret > 0.0).then(|| (j_hinf - j_regret) / j_regret)
}

/// Whether the regret certificate is the tighter cost bound.
pub fn bound_order_holds(j_clairvoyant: f64, hinf_bound: f64, regret_bound: f64) -> bool {
    j_clairvoyant <= hinf_bound - regret_bound
}

struct Costs {
    regret: f64,
    hinf: f64,
    clairvoyant: f64,
    norm: f64,
}

fn mean_se(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Costs of both policies and the benchmark for every `(θ, profile)` pair.
pub fn compare_policies(
    res_regret: &SynthesisResult,
    res_hinf: &SynthesisResult,
    system: &UncertainSystem,
    weights: &CostWeights,
    samples: &[ScenarioSample],
    profiles: &[DisturbanceProfile],
    realizations: usize,
) -> Result<Vec<ComparisonRecord>> {
    if res_regret.objective != Objective::Regret || res_hinf.objective != Objective::Hinf {
        return Err(Error::Invalid("compare_policies expects a regret and an hinf result".into()));
    }
    if res_regret.policy.dims() != res_hinf.policy.dims() || *res_regret.policy.dims() != system.dims {
        return Err(Error::Invalid("policies were synthesized for different systems".into()));
    }
    if realizations == 0 {
        return Err(Error::DomainError("realizations must be at least 1".into()));
    }
    let data = prepare_scenarios(samples, system, weights, None)?;
    let r_bar = res_regret.gamma_star;
    let h_bar = res_hinf.gamma_star;

    let jobs: Vec<(usize, &DisturbanceProfile)> = (0..samples.len())
        .flat_map(|i| profiles.iter().map(move |p| (i, p)))
        .collect();
    jobs.par_iter()
        .map(|&(i, profile)| {
            let d = &data[i];
            let regret_value = scenario_value(Objective::Regret, res_regret.policy.phi_u(), d, weights)?;
            let hinf_value = scenario_value(Objective::Hinf, res_hinf.policy.phi_u(), d, weights)?;
            let draws = if profile.kind.is_stochastic() { realizations } else { 1 };
            let costs: Vec<Costs> = (0..draws as u64)
                .map(|r| evaluate(res_regret, res_hinf, d, weights, profile, r))
                .collect::<Result<_>>()?;
            let (j_regret, se_regret) = mean_se(costs.iter().map(|c| c.regret));
            let (j_hinf, se_hinf) = mean_se(costs.iter().map(|c| c.hinf));
            let (j_clairvoyant, se_clairvoyant) = mean_se(costs.iter().map(|c| c.clairvoyant));
            Ok(ComparisonRecord {
                theta_id: i,
                profile: profile.kind,
                j_regret,
                j_hinf,
                j_clairvoyant,
                delta_j_bar: relative_increase(j_regret, j_hinf),
                bound_order_holds: bound_order_holds(j_clairvoyant, h_bar, r_bar),
                regret_bound_holds: costs.iter().all(|c| c.regret - c.clairvoyant <= r_bar + BOUND_TOL),
                hinf_bound_holds: costs.iter().all(|c| c.hinf <= h_bar + BOUND_TOL),
                regret_non_violating: regret_value <= r_bar + VIOLATION_TOL,
                hinf_non_violating: hinf_value <= h_bar + VIOLATION_TOL,
                unit_norm: costs.iter().all(|c| (c.norm - 1.0).abs() <= 1e-12),
                realizations: draws,
                se_regret,
                se_hinf,
                se_clairvoyant,
            })
        })
        .collect()
}

fn evaluate(
    res_regret: &SynthesisResult,
    res_hinf: &SynthesisResult,
    d: &ScenarioData,
    weights: &CostWeights,
    profile: &DisturbanceProfile,
    realization: u64,
) -> Result<Costs> {
    let w = match profile.kind {
        ProfileKind::WorstCaseRegret => {
            profile.generate_worst_case(res_regret.policy.phi_u(), &d.resp, &d.bench, weights)?
        }
        ProfileKind::WorstCaseCost => profile.generate_worst_case(res_hinf.policy.phi_u(), &d.resp, &d.bench, weights)?,
        _ => profile.generate(&d.resp.dims, realization)?,
    };
    Ok(Costs {
        regret: realized_cost(&res_regret.policy, &d.resp, weights, &w)?,
        hinf: realized_cost(&res_hinf.policy, &d.resp, weights, &w)?,
        clairvoyant: benchmark_cost(&d.bench, weights, &w)?,
        norm: w.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_order_arithmetic() {
        assert!(bound_order_holds(5.0, 10.0, 4.0));
        assert!(!bound_order_holds(6.5, 10.0, 4.0));
    }

    #[test]
    fn relative_increase_is_flagged_at_zero() {
        assert_eq!(relative_increase(0.0, 0.0), None);
        assert_eq!(relative_increase(2.0, 3.0), Some(0.5));
        assert_eq!(relative_increase(2.0, 2.0), Some(0.0));
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_se([1.0, 3.0].into_iter());
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
        assert_eq!(mean_se([4.0].into_iter()), (4.0, 0.0));
    }
}
