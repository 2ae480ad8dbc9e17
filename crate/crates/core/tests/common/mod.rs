//! Random instances shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use scenario_regret::benchmark::CostWeights;
use scenario_regret::lifted::{Dims, ScenarioSample, StepMatrices, UncertainSystem};
use scenario_regret::structure::{PolicyStructure, VariableLayout};

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Time-varying system with one scalar parameter per step; `p ≤ n` so `E_t`
/// has full column rank almost surely.
pub struct RandomSystem {
    pub system: UncertainSystem,
    pub sample: ScenarioSample,
    pub weights: CostWeights,
}

pub fn random_system(rng: &mut ChaCha8Rng, max_dim: usize, max_horizon: usize) -> RandomSystem {
    let n = rng.random_range(1..=max_dim);
    let m = rng.random_range(1..=max_dim);
    let p = rng.random_range(1..=n);
    let horizon = rng.random_range(1..=max_horizon);
    let dims = Dims::new(n, m, p, 1, horizon).unwrap();
    type Step = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);
    let steps: Vec<Step> = (0..horizon)
        .map(|_| {
            let a = gaussian(rng, n, n) / (n as f64).sqrt();
            let da = gaussian(rng, n, n) * 0.1;
            let b = gaussian(rng, n, m);
            let mut e = gaussian(rng, n, p);
            for i in 0..p {
                e[(i, i)] += 2.0;
            }
            (a, da, b, e)
        })
        .collect();
    let dynamics = move |t: usize, th: &DVector<f64>| {
        let (a, da, b, e) = &steps[t];
        StepMatrices {
            a: a + da * th[0],
            b: b.clone(),
            e: e.clone(),
        }
    };
    let system = UncertainSystem::new("random", dims, Arc::new(dynamics));
    let theta = (0..horizon)
        .map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0)))
        .collect();
    let sample = ScenarioSample::new(theta).unwrap();
    let qd = DVector::from_fn(dims.x_dim(), |_, _| rng.random_range(0.5..2.0));
    let rd = DVector::from_fn(dims.u_dim(), |_, _| rng.random_range(0.5..2.0));
    let weights = CostWeights::new(DMatrix::from_diagonal(&qd), DMatrix::from_diagonal(&rd)).unwrap();
    RandomSystem {
        system,
        sample,
        weights,
    }
}

/// Random causal gain with the given structure.
pub fn random_policy_vars(rng: &mut ChaCha8Rng, layout: &VariableLayout) -> Vec<f64> {
    (0..layout.num_free()).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect()
}

pub fn random_layout(dims: Dims, rng: &mut ChaCha8Rng) -> VariableLayout {
    let structure = if rng.random_bool(0.5) {
        PolicyStructure::Full
    } else {
        PolicyStructure::Toeplitz
    };
    VariableLayout::new(dims, structure)
}

/// Scalar system `x⁺ = x + u + w`, `T = 2`.
pub fn scalar_system() -> UncertainSystem {
    let dims = Dims::new(1, 1, 1, 1, 2).unwrap();
    let f = |_t: usize, _th: &DVector<f64>| StepMatrices {
        a: DMatrix::from_element(1, 1, 1.0),
        b: DMatrix::from_element(1, 1, 1.0),
        e: DMatrix::from_element(1, 1, 1.0),
    };
    UncertainSystem::new("scalar", dims, Arc::new(f))
}
