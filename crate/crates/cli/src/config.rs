//! Run configuration read from JSON.
//!
//! Dense matrices are nested arrays in row-major order (`[[a11, a12], [a21, a22]]`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenario_regret::benchmark::CostWeights;
use scenario_regret::conic::SolverSettings;
use scenario_regret::error::{Error, Result};
use scenario_regret::evaluation::{mass_spring_damper, msd_sampler, MsdParams};
use scenario_regret::lifted::{AffineDynamics, Dims, UncertainSystem};
use scenario_regret::linalg::from_rows;
use scenario_regret::sampling::{sample_dataset, UniformBox};
use scenario_regret::structure::PolicyStructure;
use scenario_regret::synthesis::{FixedSafety, Objective, SafetyRows, SynthesisOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemConfig {
    /// Built-in mass-spring-damper; missing parameters take their defaults.
    Msd {
        #[serde(default)]
        params: Option<MsdParams>,
    },
    Affine { dims: Dims, dynamics: AffineDynamics },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightsConfig {
    Identity,
    Scaled { q: f64, r: f64 },
    Dense { q: Vec<Vec<f64>>, r: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    #[serde(default = "default_true")]
    pub constant: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    /// Uniform box for `θ`; the built-in system supplies its own default.
    #[serde(default)]
    pub distribution: Option<DistributionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub epsilon: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default = "default_weights")]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub safety: Option<SafetyRows>,
    pub dataset: DatasetConfig,
    #[serde(default = "default_structure")]
    pub structure: PolicyStructure,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub certificate: Option<CertificateConfig>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_weights() -> WeightsConfig {
    WeightsConfig::Identity
}

fn default_structure() -> PolicyStructure {
    PolicyStructure::Full
}

fn default_objective() -> Objective {
    Objective::Regret
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a command needs, built from a validated config.
pub struct Problem {
    pub system: UncertainSystem,
    pub weights: CostWeights,
    pub safety: Option<FixedSafety>,
    pub sampler: UniformBox,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    /// Check the schema and build the system, weights, safety rows and sampler.
    pub fn build(&self) -> Result<Problem> {
        let system = match &self.system {
            SystemConfig::Msd { params } => mass_spring_damper(&params.unwrap_or_default())?,
            SystemConfig::Affine { dims, dynamics } => {
                let dims = Dims::new(dims.n, dims.m, dims.p, dims.d, dims.horizon)?;
                UncertainSystem::affine("affine", dims, dynamics.clone())?
            }
        };
        let dims = system.dims;
        let weights = match &self.weights {
            WeightsConfig::Identity => CostWeights::identity(&dims),
            WeightsConfig::Scaled { q, r } => {
                if !(*q >= 0.0 && *r > 0.0) {
                    return Err(Error::Invalid("scaled weights need q >= 0 and r > 0".into()));
                }
                CostWeights::scaled_identity(&dims, *q, *r)
            }
            WeightsConfig::Dense { q, r } => CostWeights::new(from_rows(q)?, from_rows(r)?)?,
        };
        weights.check(&dims)?;
        let safety = match &self.safety {
            Some(rows) => {
                rows.validate(&dims)?;
                Some(FixedSafety(rows.clone()))
            }
            None => None,
        };
        let sampler = match (&self.dataset.distribution, &self.system) {
            (Some(d), _) => UniformBox::new(d.low.clone(), d.high.clone(), dims.horizon, d.constant)?,
            (None, SystemConfig::Msd { params }) => msd_sampler(&params.unwrap_or_default())?,
            (None, SystemConfig::Affine { .. }) => {
                return Err(Error::Invalid("dataset.distribution is required for affine systems".into()))
            }
        };
        if sampler.low.len() != dims.d {
            return Err(Error::Invalid(format!(
                "distribution has {} parameters but the system expects {}",
                sampler.low.len(),
                dims.d
            )));
        }
        if self.dataset.n == 0 {
            return Err(Error::Invalid("dataset.N must be at least 1".into()));
        }
        if let Some(c) = self.certificate {
            if !(c.epsilon > 0.0 && c.epsilon < 1.0 && c.beta > 0.0 && c.beta < 1.0) {
                return Err(Error::DomainError("certificate levels must lie in (0, 1)".into()));
            }
        }
        Ok(Problem {
            system,
            weights,
            safety,
            sampler,
        })
    }

    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            structure: self.structure,
            solver: self.solver.clone(),
            ..SynthesisOptions::default()
        }
    }

    pub fn training_set(&self, problem: &Problem) -> Vec<scenario_regret::lifted::ScenarioSample> {
        sample_dataset(&problem.sampler, self.dataset.n, self.dataset.seed)
    }
}

impl Problem {
    pub fn safety_spec(&self) -> Option<&dyn scenario_regret::synthesis::SafetySpec> {
        self.safety.as_ref().map(|s| s as &dyn scenario_regret::synthesis::SafetySpec)
    }
}
