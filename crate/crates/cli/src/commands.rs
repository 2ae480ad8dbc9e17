use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenario_regret::certificates::{
    append_violation_csv, empirical_violation, min_scenarios_exact, min_scenarios_simple, write_json,
    CertificateSpec, ViolationReport,
};
use scenario_regret::error::{Error, Result};
use scenario_regret::evaluation::{run_experiment, ExperimentConfig, ExperimentKind, Scale};
use scenario_regret::regret::CausalPolicy;
use scenario_regret::sampling::{ParameterSampler, ReplaySampler};
use scenario_regret::structure::{count_decision_variables, DecisionVariableCount, PolicyStructure};
use scenario_regret::synthesis::{build_program, prepare_scenarios, solve_scenario_program, Objective, SynthesisResult};

use crate::config::RunConfig;

pub const RESULT_FILE: &str = "result.json";
pub const PROGRAM_FILE: &str = "program.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const VIOLATION_CSV: &str = "violations.csv";

/// What `synth` writes: the resolved config next to the solve result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRecord {
    pub config: RunConfig,
    pub result: SynthesisResult,
    pub certificate: Option<CertificateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub epsilon: f64,
    pub beta: f64,
    pub delta: usize,
    /// `structural` when counted from the layout, `given` when passed explicitly.
    pub delta_source: String,
    pub counts: Option<DecisionVariableCount>,
    pub n_exact: usize,
    pub n_simple: usize,
    /// Dataset size of the result, when there is one.
    pub n_used: Option<usize>,
    pub certified: Option<bool>,
}

/// Overrides shared by `synth` and `certify`.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub objective: Option<Objective>,
    pub structure: Option<PolicyStructure>,
    pub scenarios: Option<usize>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(s) = self.seed {
            c.dataset.seed = s;
        }
        if let Some(o) = self.objective {
            c.objective = o;
        }
        if let Some(s) = self.structure {
            c.structure = s;
        }
        if let Some(n) = self.scenarios {
            c.dataset.n = n;
        }
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        match (&mut c.certificate, self.eps, self.beta) {
            (Some(cert), eps, beta) => {
                cert.epsilon = eps.unwrap_or(cert.epsilon);
                cert.beta = beta.unwrap_or(cert.beta);
            }
            (None, Some(epsilon), Some(beta)) => {
                c.certificate = Some(crate::config::CertificateConfig { epsilon, beta });
            }
            _ => {}
        }
    }
}

fn certificate(
    epsilon: f64,
    beta: f64,
    delta: usize,
    delta_source: &str,
    counts: Option<DecisionVariableCount>,
    n_used: Option<usize>,
) -> Result<CertificateReport> {
    let n_exact = min_scenarios_exact(epsilon, beta, delta)?;
    let n_simple = min_scenarios_simple(epsilon, beta, delta)?;
    let certified = match n_used {
        Some(n) if n > delta => Some(CertificateSpec::new(epsilon, beta, delta, n)?.holds()?),
        Some(_) => Some(false),
        None => None,
    };
    Ok(CertificateReport {
        epsilon,
        beta,
        delta,
        delta_source: delta_source.to_string(),
        counts,
        n_exact,
        n_simple,
        n_used,
        certified,
    })
}

pub fn synth(config_path: &Path, ov: &Overrides, dump_program: bool) -> Result<PathBuf> {
    let mut config = RunConfig::load(config_path)?;
    ov.apply(&mut config);
    let problem = config.build()?;
    let options = config.options();
    let dataset = config.training_set(&problem);
    let certificate = match config.certificate {
        Some(c) => {
            let counts = count_decision_variables(&problem.system.dims, config.structure);
            Some(self::certificate(c.epsilon, c.beta, counts.structural, "structural", Some(counts), Some(dataset.len()))?)
        }
        None => None,
    };

    std::fs::create_dir_all(&config.output)?;
    if dump_program {
        let scenarios = prepare_scenarios(&dataset, &problem.system, &problem.weights, problem.safety_spec())?;
        let program = build_program(&scenarios, &problem.weights, config.objective, &options)?;
        write_json(&config.output.join(PROGRAM_FILE), &program.problem.describe())?;
    }
    let result = solve_scenario_program(
        &dataset,
        &problem.system,
        &problem.weights,
        problem.safety_spec(),
        config.objective,
        &options,
    )?;
    println!(
        "{} synthesis: gamma_star = {:.6e}, status {}, {} iterations, {:.2} s",
        result.objective, result.gamma_star, result.solver_status, result.iterations, result.wall_clock
    );
    println!(
        "decision variables: {} structural ({} structure), active scenarios {:?}",
        result.decision_variables.structural, config.structure, result.active_scenarios
    );
    if let Some(c) = &certificate {
        print_certificate(c);
    }
    let path = config.output.join(RESULT_FILE);
    write_json(
        &path,
        &SynthRecord {
            config,
            result,
            certificate,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn load_record(path: &Path) -> Result<SynthRecord> {
    let text = std::fs::read_to_string(path)?;
    let rec: SynthRecord =
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let p = &rec.result.policy;
    // Deserialization skips the causality check.
    CausalPolicy::new(*p.dims(), p.structure(), p.phi_u().clone())?;
    Ok(rec)
}

fn print_certificate(c: &CertificateReport) {
    println!("epsilon = {}, beta = {}", c.epsilon, c.beta);
    println!("delta = {} ({})", c.delta, c.delta_source);
    if let Some(k) = &c.counts {
        println!(
            "closed-form counts for reference: full {}, toeplitz {}",
            k.closed_form_full, k.closed_form_toeplitz
        );
    }
    println!("exact N = {}", c.n_exact);
    println!("simple N = {}", c.n_simple);
    if let (Some(n), Some(ok)) = (c.n_used, c.certified) {
        println!("dataset N = {n}: {}", if ok { "certified" } else { "not certified" });
    }
}

pub struct CertifyArgs {
    pub eps: f64,
    pub beta: f64,
    pub delta: Option<usize>,
    pub result: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn certify(a: &CertifyArgs) -> Result<CertificateReport> {
    let report = match (&a.result, a.delta) {
        (Some(path), None) => {
            let rec = load_record(path)?;
            let counts = rec.result.decision_variables;
            certificate(a.eps, a.beta, counts.structural, "structural", Some(counts), Some(rec.result.num_scenarios))?
        }
        (None, Some(delta)) => certificate(a.eps, a.beta, delta, "given", None, None)?,
        _ => return Err(Error::Invalid("pass exactly one of --delta or --result".into())),
    };
    print_certificate(&report);
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("certificate.json"), &report)?;
    }
    Ok(report)
}

pub struct ValidateArgs {
    pub result: PathBuf,
    pub samples: usize,
    pub seed: Option<u64>,
    pub replay_training: bool,
    pub gamma: Option<f64>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn validate(a: &ValidateArgs) -> Result<ViolationReport> {
    if a.samples == 0 {
        return Err(Error::DomainError("--validate-samples must be at least 1".into()));
    }
    let rec = load_record(&a.result)?;
    let config = &rec.config;
    let problem = config.build()?;
    let seed = a.seed.unwrap_or(config.dataset.seed + 1);
    let replay;
    let sampler: &dyn ParameterSampler = if a.replay_training {
        replay = ReplaySampler::new(config.training_set(&problem))?;
        &replay
    } else {
        &problem.sampler
    };
    let report = empirical_violation(
        &rec.result,
        &problem.system,
        &problem.weights,
        problem.safety_spec(),
        sampler,
        a.samples,
        seed,
        a.gamma,
    )?;
    println!(
        "{} of {} samples violate (rate {:.4}; regret {}, safety {}, evaluation failures {})",
        report.n_any,
        report.n_validation,
        report.empirical_rate,
        report.n_regret_violations,
        report.n_safety_violations,
        report.n_eval_failures
    );

    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.result.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&out)?;
    write_json(&out.join(VALIDATION_FILE), &report)?;
    let levels = match (a.eps, a.beta, config.certificate) {
        (Some(e), Some(b), _) => Some((e, b)),
        (e, b, Some(c)) => Some((e.unwrap_or(c.epsilon), b.unwrap_or(c.beta))),
        _ => None,
    };
    match levels {
        Some((epsilon, beta)) => {
            let spec = CertificateSpec {
                epsilon,
                beta,
                delta: rec.result.decision_variables.structural,
                n: rec.result.num_scenarios,
            };
            append_violation_csv(&out.join(VIOLATION_CSV), &report, &spec)?;
        }
        None => println!("no certificate levels given; skipping {VIOLATION_CSV}"),
    }
    Ok(report)
}

pub fn repro(kind: ExperimentKind, scale: Scale, out: &Path, seed: Option<u64>) -> Result<PathBuf> {
    let mut config = ExperimentConfig::preset(kind, scale);
    if let Some(s) = seed {
        config.seed = s;
    }
    if scale == Scale::Paper {
        eprintln!("paper scale solves thousands of scenarios; expect hours of compute");
    }
    let report = run_experiment(&config, out)?;
    for f in &report.manifest.failures {
        eprintln!("point {} failed: {}", f.point, f.error);
    }
    println!(
        "{} rows in {} ({:.1} s)",
        report.manifest.rows,
        report.table_path.display(),
        report.manifest.wall_clock_s
    );
    println!("manifest {}", report.manifest_path.display());
    Ok(report.table_path)
}
