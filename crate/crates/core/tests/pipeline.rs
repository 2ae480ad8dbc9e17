mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scenario_regret::benchmark::{benchmark_cost, clairvoyant_policy, CostWeights};
use scenario_regret::certificates::{empirical_violation, validate_on_samples};
use scenario_regret::evaluation::{
    compare_policies, mass_spring_damper, msd_sampler, msd_weights, run_experiment, simulate_with_gain,
    DisturbanceProfile, ExperimentConfig, ExperimentKind, MsdParams, ProfileKind, Scale,
};
use scenario_regret::lifted::{lift, stack_dynamics, ScenarioSample};
use scenario_regret::linalg::{max_abs, max_abs_vec};
use scenario_regret::regret::{realized_cost, regret_gram, worst_case_cost, worst_case_regret, CausalPolicy};
use scenario_regret::sampling::{sample_dataset, ReplaySampler};
use scenario_regret::structure::{is_causal_entry, PolicyStructure, VariableLayout};
use scenario_regret::synthesis::{solve_scenario_program, Objective, SynthesisOptions};

use common::{gaussian_vec, random_layout, random_policy_vars, random_system, scalar_system};

#[test]
fn msd_stacks_nominal_blocks() {
    let p = MsdParams::default();
    let sys = mass_spring_damper(&p).unwrap();
    let st = stack_dynamics(&sys, &ScenarioSample::constant(DVector::zeros(2), p.horizon).unwrap()).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]);
    for t in 0..p.horizon {
        assert_eq!(st.a_blk.view((2 * t, 2 * t), (2, 2)), a);
        assert_eq!(st.b_blk.view((2 * t, t), (2, 1)), DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
    }
    assert_eq!(st.e_blk, DMatrix::identity(40, 40));
}

#[test]
fn benchmark_as_policy_reproduces_benchmark_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let inst = random_system(&mut rng, 3, 6);
        let (_, resp) = lift(&inst.system, &inst.sample).unwrap();
        let bench = clairvoyant_policy(&resp, &inst.weights).unwrap();
        let w = gaussian_vec(&mut rng, inst.system.dims.w_dim());
        let tr = simulate_with_gain(&bench.psi_u, &inst.system, &inst.sample, &w).unwrap();
        assert!(max_abs_vec(&(&tr.x - &bench.psi_x * &w)) <= 1e-9);
        let j = benchmark_cost(&bench, &inst.weights, &w).unwrap();
        assert!((inst.weights.cost(&tr.x, &tr.u) - j).abs() <= 1e-9 * j.max(1.0));
    }
}

#[test]
fn spectral_bounds_dominate_sampled_disturbances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inst = random_system(&mut rng, 2, 4);
    let d = inst.system.dims;
    let (_, resp) = lift(&inst.system, &inst.sample).unwrap();
    let bench = clairvoyant_policy(&resp, &inst.weights).unwrap();
    let layout = random_layout(d, &mut rng);
    let pol = CausalPolicy::from_variables(&layout, &random_policy_vars(&mut rng, &layout));
    let gram = regret_gram(&pol, &bench, &resp, &inst.weights).unwrap();
    let (lam, _) = worst_case_regret(&gram).unwrap();
    let (top, _) = worst_case_cost(&pol, &resp, &inst.weights).unwrap();
    let mut best = 0.0_f64;
    for _ in 0..10_000 {
        let w = gaussian_vec(&mut rng, d.w_dim());
        let w = &w / w.norm();
        assert!(w.dot(&(&gram.delta * &w)) <= lam + 1e-12);
        best = best.max(realized_cost(&pol, &resp, &inst.weights, &w).unwrap());
    }
    assert!(best <= top + 1e-12 && best >= 0.99 * top, "{best} vs {top}");
}

#[test]
fn scalar_benchmark_and_costs() {
    let sys = scalar_system();
    let sample = ScenarioSample::constant(DVector::zeros(1), 2).unwrap();
    let w8 = CostWeights::identity(&sys.dims);
    let (_, resp) = lift(&sys, &sample).unwrap();
    let bench = clairvoyant_policy(&resp, &w8).unwrap();
    assert!(max_abs(&(&bench.psi_u - DMatrix::from_row_slice(2, 2, &[-0.5, -0.5, 0.0, 0.0]))) < 1e-14);
    let w = DVector::from_vec(vec![1.0, 0.0]);
    assert!((benchmark_cost(&bench, &w8, &w).unwrap() - 1.5).abs() < 1e-14);
    let zero = CausalPolicy::zero(sys.dims, PolicyStructure::Full);
    assert!((realized_cost(&zero, &resp, &w8, &w).unwrap() - 2.0).abs() < 1e-14);
}

fn msd_setup(horizon: usize) -> (scenario_regret::lifted::UncertainSystem, CostWeights, scenario_regret::sampling::UniformBox) {
    let p = MsdParams {
        horizon,
        ..MsdParams::default()
    };
    (mass_spring_damper(&p).unwrap(), msd_weights(&p).unwrap(), msd_sampler(&p).unwrap())
}

#[test]
fn validation_on_training_data_and_overrides() {
    let (sys, weights, sampler) = msd_setup(6);
    let data = sample_dataset(&sampler, 8, 3);
    let res = solve_scenario_program(&data, &sys, &weights, None, Objective::Regret, &SynthesisOptions::default()).unwrap();
    for (i, row) in (0..res.policy.phi_u().nrows()).zip(res.policy.phi_u().row_iter()) {
        for (j, v) in row.iter().enumerate() {
            if !is_causal_entry(&sys.dims, i, j) {
                assert_eq!(*v, 0.0);
            }
        }
    }
    let train = validate_on_samples(&res, res.gamma_star, &sys, &weights, None, &data, 0).unwrap();
    assert_eq!(train.empirical_rate, 0.0);
    let replay = ReplaySampler::new(data.clone()).unwrap();
    let rep = empirical_violation(&res, &sys, &weights, None, &replay, 200, 5, None).unwrap();
    assert_eq!(rep.n_any, 0);
    let loose = empirical_violation(&res, &sys, &weights, None, &sampler, 200, 5, Some(1e9)).unwrap();
    assert_eq!(loose.empirical_rate, 0.0);
    let again = empirical_violation(&res, &sys, &weights, None, &sampler, 200, 5, None).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&empirical_violation(&res, &sys, &weights, None, &sampler, 200, 5, None).unwrap()).unwrap());
}

#[test]
fn identical_policies_and_zero_profile() {
    let (sys, weights, sampler) = msd_setup(5);
    let data = sample_dataset(&sampler, 5, 1);
    let res = solve_scenario_program(&data, &sys, &weights, None, Objective::Regret, &SynthesisOptions::default()).unwrap();
    let mut twin = res.clone();
    twin.objective = Objective::Hinf;
    let profiles: Vec<DisturbanceProfile> = ProfileKind::ALL.iter().map(|&k| DisturbanceProfile::new(k)).collect();
    let thetas = sample_dataset(&sampler, 3, 9);
    let recs = compare_policies(&res, &twin, &sys, &weights, &thetas, &profiles, 10).unwrap();
    assert_eq!(recs.len(), 3 * ProfileKind::ALL.len());
    for r in &recs {
        if r.profile == ProfileKind::Zero {
            assert_eq!((r.j_regret, r.j_hinf, r.j_clairvoyant), (0.0, 0.0, 0.0));
            assert_eq!(r.delta_j_bar, None);
        } else {
            assert_eq!(r.delta_j_bar, Some(0.0), "{:?}", r.profile);
        }
    }
    assert!(compare_policies(&res, &res, &sys, &weights, &thetas, &profiles, 10).is_err());
}

#[test]
fn violation_curve_small_reports_both_structures() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::preset(ExperimentKind::ViolationCurve, Scale::Small);
    c.system.horizon = 6;
    c.n_grid = vec![5, 10];
    c.n_validation = 200;
    let rep = run_experiment(&c, dir.path()).unwrap();
    let text = std::fs::read_to_string(&rep.table_path).unwrap();
    assert!(text.starts_with("N,delta_used,eps_theory,v_full,v_toeplitz,seed"));
    assert_eq!(rep.manifest.rows, 2);
    assert!(rep.manifest.failures.is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&rep.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["training"], c.seed);
    assert_eq!(manifest["config"]["n_grid"], serde_json::json!([5, 10]));
}

#[test]
fn causal_layout_full_scalar() {
    let layout = VariableLayout::new(scalar_system().dims, PolicyStructure::Full);
    assert_eq!(layout.num_free(), 3);
}
