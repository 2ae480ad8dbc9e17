//! Disturbance profiles over the stacked vector `w = (x_0, w_0, …, w_{T-2})`.
//!
//! Block `b` of `w` (block 0 is `x_0`) sits at time `b`. Shaped profiles put
//! the same scalar signal on every component of a block.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::benchmark::{ClairvoyantBenchmark, CostWeights};
use crate::error::{Error, Result};
use crate::lifted::{Dims, ResponseOperators};
use crate::linalg::{normalize_sign, symmetrize, top_eigenpair};
use crate::regret::{cost_factor, regret_matrix};
use crate::sampling::sample_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Zero,
    Constant,
    Step,
    Ramp,
    Sinusoid,
    WhiteGaussian,
    Uniform,
    WorstCaseRegret,
    WorstCaseCost,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 9] = [
        ProfileKind::Zero,
        ProfileKind::Constant,
        ProfileKind::Step,
        ProfileKind::Ramp,
        ProfileKind::Sinusoid,
        ProfileKind::WhiteGaussian,
        ProfileKind::Uniform,
        ProfileKind::WorstCaseRegret,
        ProfileKind::WorstCaseCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Zero => "zero",
            ProfileKind::Constant => "constant",
            ProfileKind::Step => "step",
            ProfileKind::Ramp => "ramp",
            ProfileKind::Sinusoid => "sinusoid",
            ProfileKind::WhiteGaussian => "white-gaussian",
            ProfileKind::Uniform => "uniform",
            ProfileKind::WorstCaseRegret => "worst-case-regret",
            ProfileKind::WorstCaseCost => "worst-case-cost",
        }
    }

    /// Random profiles are averaged over several realizations.
    pub fn is_stochastic(self) -> bool {
        matches!(self, ProfileKind::WhiteGaussian | ProfileKind::Uniform)
    }

    /// Worst-case profiles depend on a policy and a sample.
    pub fn needs_policy(self) -> bool {
        matches!(self, ProfileKind::WorstCaseRegret | ProfileKind::WorstCaseCost)
    }
}

impl std::fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown disturbance profile `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    pub kind: ProfileKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Periods over the horizon (sinusoid only).
    #[serde(default = "one")]
    pub frequency: f64,
    /// First nonzero block of the step; `None` means `T/2`.
    #[serde(default)]
    pub onset: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Scale to unit Euclidean norm.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl DisturbanceProfile {
    pub fn new(kind: ProfileKind) -> Self {
        Self {
            kind,
            amplitude: 1.0,
            frequency: 1.0,
            onset: None,
            seed: 0,
            normalize: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Generate realization `realization` of a policy-independent profile.
    pub fn generate(&self, dims: &Dims, realization: u64) -> Result<DVector<f64>> {
        if self.kind.needs_policy() {
            return Err(Error::Invalid(format!(
                "profile `{}` needs a policy and sample; use generate_worst_case",
                self.kind
            )));
        }
        let horizon = dims.horizon;
        let signal = |b: usize| -> f64 {
            let t = b as f64;
            match self.kind {
                ProfileKind::Constant => 1.0,
                ProfileKind::Step => {
                    if b >= self.onset.unwrap_or(horizon / 2) {
                        1.0
                    } else {
                        0.0
                    }
                }
                ProfileKind::Ramp => {
                    if horizon > 1 {
                        t / (horizon - 1) as f64
                    } else {
                        1.0
                    }
                }
                ProfileKind::Sinusoid => (2.0 * PI * self.frequency * t / horizon as f64).sin(),
                _ => 0.0,
            }
        };
        let mut w = DVector::zeros(dims.w_dim());
        match self.kind {
            ProfileKind::Zero => {}
            ProfileKind::WhiteGaussian => {
                let mut rng = sample_rng(self.seed, realization);
                w.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
            }
            ProfileKind::Uniform => {
                let mut rng = sample_rng(self.seed, realization);
                let dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
                w.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            }
            _ => {
                for b in 0..horizon {
                    let s = signal(b);
                    let (o, k) = (dims.w_block_offset(b), dims.w_block_width(b));
                    w.rows_mut(o, k).fill(s);
                }
            }
        }
        Ok(self.finish(w))
    }

    /// Maximizing unit disturbance of the regret matrix (for `WorstCaseRegret`)
    /// or of the cost Gram matrix (for `WorstCaseCost`) of `phi_u` at one sample.
    pub fn generate_worst_case(
        &self,
        phi_u: &DMatrix<f64>,
        resp: &ResponseOperators,
        bench: &ClairvoyantBenchmark,
        weights: &CostWeights,
    ) -> Result<DVector<f64>> {
        let m = match self.kind {
            ProfileKind::WorstCaseRegret => regret_matrix(phi_u, bench, resp, weights)?,
            ProfileKind::WorstCaseCost => {
                let f = cost_factor(phi_u, resp, weights)?;
                symmetrize(&(f.transpose() * f))
            }
            other => {
                return Err(Error::Invalid(format!("profile `{other}` is not a worst-case profile")));
            }
        };
        let (_, mut v) = top_eigenpair(&m)?;
        normalize_sign(&mut v);
        Ok(self.finish(v))
    }

    fn finish(&self, w: DVector<f64>) -> DVector<f64> {
        let w = w * self.amplitude;
        let norm = w.norm();
        if self.normalize && norm > 0.0 {
            w / norm
        } else {
            w
        }
    }
}
