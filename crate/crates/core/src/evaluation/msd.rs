//! Discretized mass-spring-damper with uncertain stiffness and damping.
//!
//! `θ = (δ_k, δ_c)` perturbs the spring constant and the damping
//! coefficient and is held constant over the horizon.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::benchmark::CostWeights;
use crate::error::Result;
use crate::lifted::{AffineDynamics, AffineMatrix, AffineStep, Dims, StepMatrices, UncertainSystem};
use crate::sampling::UniformBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsdParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub sample_time: f64,
    pub horizon: usize,
    /// Half-width of the uniform box for `(δ_k, δ_c)`.
    pub radius: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 1.0,
            damping: 1.0,
            sample_time: 1.0,
            horizon: 20,
            radius: 0.2,
        }
    }
}

/// `(A, B, E)` at a fixed perturbation.
pub fn msd_matrices(p: &MsdParams, delta_k: f64, delta_c: f64) -> StepMatrices {
    let ts = p.sample_time;
    StepMatrices {
        a: DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0,
                ts,
                -(p.stiffness + delta_k) * ts / p.mass,
                1.0 - (p.damping + delta_c) * ts / p.mass,
            ],
        ),
        b: DMatrix::from_column_slice(2, 1, &[0.0, ts / p.mass]),
        e: DMatrix::identity(2, 2),
    }
}

/// The uncertain system, affine in `θ = (δ_k, δ_c)`.
pub fn mass_spring_damper(p: &MsdParams) -> Result<UncertainSystem> {
    let nominal = msd_matrices(p, 0.0, 0.0);
    let scale = -p.sample_time / p.mass;
    let dk = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, scale, 0.0]);
    let dc = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, scale]);
    let step = AffineStep {
        a: AffineMatrix {
            constant: nominal.a,
            coefficients: vec![dk, dc],
        },
        b: AffineMatrix::constant(nominal.b),
        e: AffineMatrix::constant(nominal.e),
    };
    let dims = Dims::new(2, 1, 2, 2, p.horizon)?;
    UncertainSystem::affine("mass-spring-damper", dims, AffineDynamics { steps: vec![step] })
}

/// `θ ~ U[-r, r]²`, constant over the horizon.
pub fn msd_sampler(p: &MsdParams) -> Result<UniformBox> {
    UniformBox::symmetric(p.radius, 2, p.horizon)
}

/// `Q = I`, `R = I` on the stacked trajectories.
pub fn msd_weights(p: &MsdParams) -> Result<CostWeights> {
    Ok(CostWeights::identity(&Dims::new(2, 1, 2, 2, p.horizon)?))
}
