//! Sweeps on the mass-spring-damper model: out-of-sample violation versus
//! `N`, certified regret and solve time versus `N`, and realized-cost
//! comparison of the regret and worst-case-cost policies.
//!
//! Each run writes one CSV table and a JSON manifest holding the full
//! configuration and the derived seeds.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificates::{empirical_violation, epsilon_simple, write_json};
use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::sampling::{sample_dataset, UniformBox};
use crate::structure::{count_decision_variables, PolicyStructure};
use crate::synthesis::{solve_scenario_program, Objective, SynthesisOptions, SynthesisResult};

use super::compare::{compare_policies, ComparisonRecord, DEFAULT_REALIZATIONS};
use super::msd::{mass_spring_damper, msd_sampler, msd_weights, MsdParams};
use super::profiles::{DisturbanceProfile, ProfileKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ViolationCurve,
    RegretRuntimeCurve,
    CostComparison,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ViolationCurve => "violation-curve",
            ExperimentKind::RegretRuntimeCurve => "regret-runtime-curve",
            ExperimentKind::CostComparison => "cost-comparison",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [Self::ViolationCurve, Self::RegretRuntimeCurve, Self::CostComparison]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!("unknown experiment `{s}` (expected violation-curve|regret-runtime-curve|cost-comparison)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Small,
    /// Thousands of scenarios; expect hours of compute.
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "small" => Ok(Self::Small),
            "paper" => Ok(Self::Paper),
            other => Err(format!("unknown scale `{other}` (expected small|paper)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scale: Scale,
    pub system: MsdParams,
    pub seed: u64,
    /// Confidence level for the theoretical violation bound.
    pub beta: f64,
    /// Scenario counts swept by the curve experiments.
    pub n_grid: Vec<usize>,
    pub n_validation: usize,
    /// Training scenarios for the cost comparison.
    pub n_train: usize,
    /// Test parameter draws for the cost comparison.
    pub n_theta: usize,
    pub realizations: usize,
    pub profiles: Vec<ProfileKind>,
    /// Structure used for both policies in the cost comparison.
    pub structure: PolicyStructure,
    pub solver: SolverSettings,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let (n_grid, n_validation, n_train, realizations) = match (kind, scale) {
            (ExperimentKind::ViolationCurve, Scale::Small) => (vec![10, 20, 50], 1000, 50, DEFAULT_REALIZATIONS),
            (ExperimentKind::RegretRuntimeCurve, Scale::Small) => (vec![10, 25, 50], 1000, 50, DEFAULT_REALIZATIONS),
            (ExperimentKind::CostComparison, Scale::Small) => (vec![], 1000, 50, DEFAULT_REALIZATIONS),
            (_, Scale::Paper) => (vec![100, 250, 500, 1000, 2500, 5000], 10_000, 5000, 10_000),
        };
        Self {
            kind,
            scale,
            system: MsdParams::default(),
            seed: 2024,
            beta: 0.01,
            n_grid,
            n_validation,
            n_train,
            n_theta: 20,
            realizations,
            profiles: ProfileKind::ALL.to_vec(),
            structure: PolicyStructure::Full,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if self.system.horizon == 0 {
            return bad("horizon must be positive");
        }
        match self.kind {
            ExperimentKind::ViolationCurve | ExperimentKind::RegretRuntimeCurve => {
                if self.n_grid.is_empty() || self.n_grid.contains(&0) {
                    return bad("n_grid must be a nonempty list of positive scenario counts");
                }
                if self.kind == ExperimentKind::ViolationCurve && self.n_validation == 0 {
                    return bad("n_validation must be positive");
                }
            }
            ExperimentKind::CostComparison => {
                if self.n_train == 0 || self.n_theta == 0 || self.realizations == 0 {
                    return bad("n_train, n_theta and realizations must be positive");
                }
                if self.profiles.is_empty() {
                    return bad("at least one disturbance profile is required");
                }
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan {
            training: self.seed,
            validation: self.seed.wrapping_add(1),
            theta: self.seed.wrapping_add(2),
            profiles: self.seed.wrapping_add(3),
        }
    }
}

/// Independent seeds for each random stage of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub training: u64,
    pub validation: u64,
    pub theta: u64,
    pub profiles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub seeds: SeedPlan,
    pub table: String,
    pub extra_files: Vec<String>,
    pub rows: usize,
    pub failures: Vec<PointFailure>,
    pub wall_clock_s: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta_used: usize,
    pub eps_theory: f64,
    pub v_full: f64,
    pub v_toeplitz: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRuntimeRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub r_full: f64,
    pub r_toeplitz: f64,
    pub t_full_s: f64,
    pub t_toeplitz_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub theta_id: usize,
    pub profile: ProfileKind,
    #[serde(rename = "J_r")]
    pub j_r: f64,
    #[serde(rename = "J_h")]
    pub j_h: f64,
    #[serde(rename = "J_psi")]
    pub j_psi: f64,
    /// Empty when the regret policy's cost is zero.
    #[serde(rename = "dJbar")]
    pub d_j_bar: Option<f64>,
    pub bound_order: bool,
}

impl From<&ComparisonRecord> for ComparisonRow {
    fn from(r: &ComparisonRecord) -> Self {
        Self {
            theta_id: r.theta_id,
            profile: r.profile,
            j_r: r.j_regret,
            j_h: r.j_hinf,
            j_psi: r.j_clairvoyant,
            d_j_bar: r.delta_j_bar,
            bound_order: r.bound_order_holds,
        }
    }
}

/// Output locations of a finished run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub manifest_path: PathBuf,
    pub table_path: PathBuf,
    pub manifest: ExperimentManifest,
}

/// Rows are flushed as soon as each point finishes.
struct TableWriter {
    inner: csv::Writer<File>,
    rows: usize,
}

impl TableWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            inner: csv::Writer::from_path(path)?,
            rows: 0,
        })
    }

    fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        self.rows += 1;
        Ok(())
    }
}

struct Setup {
    system: crate::lifted::UncertainSystem,
    weights: crate::benchmark::CostWeights,
    sampler: UniformBox,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    Ok(Setup {
        system: mass_spring_damper(&config.system)?,
        weights: msd_weights(&config.system)?,
        sampler: msd_sampler(&config.system)?,
    })
}

fn solve(
    s: &Setup,
    config: &ExperimentConfig,
    n: usize,
    objective: Objective,
    structure: PolicyStructure,
) -> Result<SynthesisResult> {
    // Datasets are nested: the first `n` draws of the training stream.
    let data = sample_dataset(&s.sampler, n, config.seeds().training);
    let options = SynthesisOptions {
        structure,
        solver: config.solver.clone(),
        ..SynthesisOptions::default()
    };
    solve_scenario_program(&data, &s.system, &s.weights, None, objective, &options)
}

/// Run one experiment, writing its table and manifest into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let s = setup(config)?;
    let stem = config.kind.name();
    let table_path = out_dir.join(format!("{stem}.csv"));
    let mut table = TableWriter::create(&table_path)?;
    let mut failures = Vec::new();
    let mut extra_files = Vec::new();

    match config.kind {
        ExperimentKind::ViolationCurve => {
            let delta = count_decision_variables(&s.system.dims, PolicyStructure::Full).structural;
            for &n in &config.n_grid {
                let point = || -> Result<ViolationRow> {
                    let mut rates = [0.0; 2];
                    for (k, st) in [PolicyStructure::Full, PolicyStructure::Toeplitz].into_iter().enumerate() {
                        let res = solve(&s, config, n, Objective::Regret, st)?;
                        let rep = empirical_violation(
                            &res,
                            &s.system,
                            &s.weights,
                            None,
                            &s.sampler,
                            config.n_validation,
                            config.seeds().validation,
                            None,
                        )?;
                        rates[k] = rep.empirical_rate;
                    }
                    Ok(ViolationRow {
                        n,
                        delta_used: delta,
                        eps_theory: epsilon_simple(n, config.beta, delta),
                        v_full: rates[0],
                        v_toeplitz: rates[1],
                        seed: config.seed,
                    })
                };
                match point() {
                    Ok(row) => table.write(&row)?,
                    Err(e) => failures.push(PointFailure {
                        point: format!("N={n}"),
                        error: e.to_string(),
                    }),
                }
            }
        }
        ExperimentKind::RegretRuntimeCurve => {
            for &n in &config.n_grid {
                let point = || -> Result<RegretRuntimeRow> {
                    let full = solve(&s, config, n, Objective::Regret, PolicyStructure::Full)?;
                    let toep = solve(&s, config, n, Objective::Regret, PolicyStructure::Toeplitz)?;
                    Ok(RegretRuntimeRow {
                        n,
                        r_full: full.gamma_star,
                        r_toeplitz: toep.gamma_star,
                        t_full_s: full.wall_clock,
                        t_toeplitz_s: toep.wall_clock,
                    })
                };
                match point() {
                    Ok(row) => table.write(&row)?,
                    Err(e) => failures.push(PointFailure {
                        point: format!("N={n}"),
                        error: e.to_string(),
                    }),
                }
            }
        }
        ExperimentKind::CostComparison => {
            let regret = solve(&s, config, config.n_train, Objective::Regret, config.structure)?;
            let hinf = solve(&s, config, config.n_train, Objective::Hinf, config.structure)?;
            for (name, res) in [("regret_result.json", &regret), ("hinf_result.json", &hinf)] {
                write_json(&out_dir.join(name), res)?;
                extra_files.push(name.to_string());
            }
            let thetas = sample_dataset(&s.sampler, config.n_theta, config.seeds().theta);
            let profiles: Vec<DisturbanceProfile> = config
                .profiles
                .iter()
                .map(|&k| DisturbanceProfile::new(k).with_seed(config.seeds().profiles))
                .collect();
            let records = compare_policies(
                &regret,
                &hinf,
                &s.system,
                &s.weights,
                &thetas,
                &profiles,
                config.realizations,
            )?;
            for r in &records {
                table.write(&ComparisonRow::from(r))?;
            }
            write_json(&out_dir.join("comparison_records.json"), &records)?;
            extra_files.push("comparison_records.json".to_string());
        }
    }

    let manifest = ExperimentManifest {
        kind: config.kind,
        config: config.clone(),
        seeds: config.seeds(),
        table: table_path.file_name().unwrap().to_string_lossy().into_owned(),
        extra_files,
        rows: table.rows,
        failures,
        wall_clock_s: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let manifest_path = out_dir.join(format!("{stem}.manifest.json"));
    write_json(&manifest_path, &manifest)?;
    Ok(ExperimentReport {
        manifest_path,
        table_path,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for kind in [
            ExperimentKind::ViolationCurve,
            ExperimentKind::RegretRuntimeCurve,
            ExperimentKind::CostComparison,
        ] {
            for scale in [Scale::Small, Scale::Paper] {
                ExperimentConfig::preset(kind, scale).validate().unwrap();
            }
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
        assert!("figure-9".parse::<ExperimentKind>().is_err());
        assert!("huge".parse::<Scale>().is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = ExperimentConfig::preset(ExperimentKind::ViolationCurve, Scale::Small);
        c.n_grid.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(ExperimentKind::CostComparison, Scale::Small);
        c.profiles.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_regret_runtime_curve_writes_table_and_manifest() {
        let dir = std::env::temp_dir().join(format!("rr-curve-{}", std::process::id()));
        let mut c = ExperimentConfig::preset(ExperimentKind::RegretRuntimeCurve, Scale::Small);
        c.system.horizon = 4;
        c.n_grid = vec![3, 6];
        let rep = run_experiment(&c, &dir).unwrap();
        assert_eq!(rep.manifest.rows, 2);
        let text = std::fs::read_to_string(&rep.table_path).unwrap();
        assert!(text.starts_with("N,r_full,r_toeplitz,t_full_s,t_toeplitz_s"));
        let rows: Vec<RegretRuntimeRow> = csv::Reader::from_path(&rep.table_path)
            .unwrap()
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        for r in &rows {
            assert!(r.r_toeplitz >= r.r_full - 1e-6);
        }
        assert!(rows[1].r_full >= rows[0].r_full - 1e-6);
        std::fs::remove_dir_all(dir).ok();
    }
}
