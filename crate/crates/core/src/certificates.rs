//! Sample-complexity bounds for scenario programs and Monte Carlo estimates
//! of out-of-sample violation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::benchmark::CostWeights;
use crate::error::{Error, Result};
use crate::lifted::{ScenarioSample, UncertainSystem};
use crate::sampling::{sample_rng, ParameterSampler};
use crate::synthesis::{prepare_scenarios, row_lhs_values, scenario_value, SafetySpec, SynthesisResult};

/// Absolute slack before a validation sample counts as violating.
pub const VIOLATION_TOL: f64 = 1e-7;

/// Violation and confidence levels plus the variable count and dataset size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateSpec {
    pub epsilon: f64,
    pub beta: f64,
    pub delta: usize,
    pub n: usize,
}

impl CertificateSpec {
    pub fn new(epsilon: f64, beta: f64, delta: usize, n: usize) -> Result<Self> {
        check_levels(epsilon, beta, delta)?;
        if n <= delta {
            return Err(Error::DomainError(format!("need N > delta (N = {n}, delta = {delta})")));
        }
        Ok(Self { epsilon, beta, delta, n })
    }

    /// Whether the binomial tail at `(N, δ, ε)` is at most `β`.
    pub fn holds(&self) -> Result<bool> {
        Ok(binomial_tail(self.n, self.delta, self.epsilon)? <= self.beta)
    }
}

fn check_levels(epsilon: f64, beta: f64, delta: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DomainError(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::DomainError(format!("beta must lie in (0, 1), got {beta}")));
    }
    if delta == 0 {
        return Err(Error::DomainError("delta must be at least 1".into()));
    }
    Ok(())
}

/// `Σ_{j<δ} C(N, j) ε^j (1-ε)^{N-j}`, evaluated in log space.
pub fn binomial_tail(n: usize, delta: usize, epsilon: f64) -> Result<f64> {
    if n == 0 || delta == 0 || delta > n {
        return Err(Error::DomainError(format!("need 1 <= delta <= N (N = {n}, delta = {delta})")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DomainError(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let nf = n as f64;
    let (le, l1e) = (epsilon.ln(), (-epsilon).ln_1p());
    let ln_n_fact = ln_gamma(nf + 1.0);
    let terms: Vec<f64> = (0..delta)
        .map(|j| {
            let jf = j as f64;
            ln_n_fact - ln_gamma(jf + 1.0) - ln_gamma(nf - jf + 1.0) + jf * le + (nf - jf) * l1e
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).exp().clamp(0.0, 1.0))
}

/// Smallest `N > δ` with `binomial_tail(N, δ, ε) ≤ β`.
pub fn min_scenarios_exact(epsilon: f64, beta: f64, delta: usize) -> Result<usize> {
    check_levels(epsilon, beta, delta)?;
    let ok = |n: usize| binomial_tail(n, delta, epsilon).map(|t| t <= beta);
    let mut lo = delta;
    let mut hi = delta + 1;
    while !ok(hi)? {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| Error::DomainError("required sample size overflows".into()))?;
    }
    // Invariant: tail(lo) > β or lo = δ; tail(hi) ≤ β.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `⌈2/ε (δ + ln 1/β)⌉`.
pub fn min_scenarios_simple(epsilon: f64, beta: f64, delta: usize) -> Result<usize> {
    check_levels(epsilon, beta, delta)?;
    let v = 2.0 / epsilon * (delta as f64 + (1.0 / beta).ln());
    // Values within rounding of an integer are not pushed up by one.
    let r = v.round();
    let n = if (v - r).abs() <= 1e-12 * v.max(1.0) { r } else { v.ceil() };
    Ok(n as usize)
}

/// Outcome of a Monte Carlo validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub n_validation: usize,
    pub n_regret_violations: usize,
    pub n_safety_violations: usize,
    pub n_any: usize,
    /// Samples whose lifting or benchmark failed; excluded from the counts above.
    pub n_eval_failures: usize,
    pub empirical_rate: f64,
    pub seed: u64,
    pub gamma: f64,
    pub dataset_id: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct SampleOutcome {
    regret: bool,
    safety: bool,
    failed: bool,
}

/// Check a policy against explicit samples with bound `gamma`.
pub fn validate_on_samples(
    result: &SynthesisResult,
    gamma: f64,
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    samples: &[ScenarioSample],
    seed: u64,
) -> Result<ViolationReport> {
    let outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .map(|s| evaluate_sample(result, gamma, system, weights, safety, s))
        .collect();
    Ok(summarize(result, gamma, &outcomes, seed))
}

fn evaluate_sample(
    result: &SynthesisResult,
    gamma: f64,
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    sample: &ScenarioSample,
) -> SampleOutcome {
    let run = || -> Result<SampleOutcome> {
        let data = prepare_scenarios(std::slice::from_ref(sample), system, weights, safety)?
            .pop()
            .expect("one sample in, one out");
        let value = scenario_value(result.objective, result.policy.phi_u(), &data, weights)?;
        let regret = value > gamma + VIOLATION_TOL;
        let safety = match &data.safety {
            Some(rows) => row_lhs_values(rows, &data.resp, result.policy.phi_u())?
                .iter()
                .zip(&rows.h)
                .any(|(lhs, h)| lhs - h > VIOLATION_TOL),
            None => false,
        };
        Ok(SampleOutcome {
            regret,
            safety,
            failed: false,
        })
    };
    run().unwrap_or(SampleOutcome {
        failed: true,
        ..Default::default()
    })
}

fn summarize(result: &SynthesisResult, gamma: f64, outcomes: &[SampleOutcome], seed: u64) -> ViolationReport {
    let count = |f: fn(&SampleOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let n_any = count(|o| o.regret || o.safety);
    ViolationReport {
        n_validation: outcomes.len(),
        n_regret_violations: count(|o| o.regret),
        n_safety_violations: count(|o| o.safety),
        n_any,
        n_eval_failures: count(|o| o.failed),
        empirical_rate: n_any as f64 / outcomes.len().max(1) as f64,
        seed,
        gamma,
        dataset_id: result.dataset_id.clone(),
    }
}

/// Fresh draws from `sampler`; sample `i` uses stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_violation(
    result: &SynthesisResult,
    system: &UncertainSystem,
    weights: &CostWeights,
    safety: Option<&dyn SafetySpec>,
    sampler: &dyn ParameterSampler,
    n_validation: usize,
    seed: u64,
    gamma_override: Option<f64>,
) -> Result<ViolationReport> {
    if n_validation == 0 {
        return Err(Error::DomainError("n_validation must be at least 1".into()));
    }
    let gamma = gamma_override.unwrap_or(result.gamma_star);
    let outcomes: Vec<SampleOutcome> = (0..n_validation as u64)
        .into_par_iter()
        .map(|i| {
            let sample = sampler.draw(&mut sample_rng(seed, i));
            evaluate_sample(result, gamma, system, weights, safety, &sample)
        })
        .collect();
    Ok(summarize(result, gamma, &outcomes, seed))
}

/// Append `(N, eps, beta, delta, rate, seed)` to a CSV file, writing the header for a new file.
pub fn append_violation_csv(path: &Path, report: &ViolationReport, spec: &CertificateSpec) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(["N", "eps", "beta", "delta", "rate", "seed"])?;
    }
    w.serialize((spec.n, spec.epsilon, spec.beta, spec.delta, report.empirical_rate, report.seed))?;
    w.flush()?;
    Ok(())
}

/// `ε` implied by the simple bound for a given `N`, `β` and `δ`.
pub fn epsilon_simple(n: usize, beta: f64, delta: usize) -> f64 {
    2.0 / n as f64 * (delta as f64 + (1.0 / beta).ln())
}

/// Write a JSON value followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
