//! Closed-loop simulation, disturbance profiles, policy comparison and the
//! experiment harness for the mass-spring-damper study.

pub mod compare;
pub mod experiments;
pub mod msd;
pub mod profiles;
pub mod simulate;

pub use compare::{compare_policies, bound_order_holds, relative_increase, ComparisonRecord, DEFAULT_REALIZATIONS};
pub use experiments::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentManifest, ExperimentReport, Scale};
pub use msd::{mass_spring_damper, msd_matrices, msd_sampler, msd_weights, MsdParams};
pub use profiles::{DisturbanceProfile, ProfileKind};
pub use simulate::{
    realize_state_feedback, reconstruct_disturbance, simulate_closed_loop, simulate_with_gain, state_feedback_gain,
    Trajectory,
};
