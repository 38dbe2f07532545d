//! Evolutionary gait and morphology search for a desk-scale quadruped model.
//!
//! The crate bundles everything the experiment binary needs: a genotype
//! encoding for gait and leg-length parameters, a crawl-gait foot path
//! generator, analytic leg kinematics, a voltage-dependent servo model, a
//! deterministic quasi-static simulation backend, the NSGA-II optimizer, and
//! the statistics used to compare populations evolved at different supply
//! voltages.

pub mod actuation;
pub mod archive;
pub mod config;
pub mod experiment;
pub mod fitness;
pub mod gait;
pub mod genome;
pub mod kinematics;
pub mod nsga2;
pub mod plot;
pub mod sim;
pub mod stats;

pub use actuation::ServoSpec;
pub use gait::{FootPath, LegSchedule};
pub use genome::{GaitParams, Genotype, SPEED_LIMIT_M_PER_MIN};
pub use kinematics::{JointAngles, LegGeometry};
pub use nsga2::{EvalOutcome, Evaluator, EvoConfig, Fitness, Individual, RunHistory};
pub use config::ExperimentConfig;
pub use sim::{EvalConfig, EvaluationResult, SimEvaluator, Trace};
pub use stats::GroupSample;
