//! Cognitive-flexibility particle filtering.
//!
//! A bank of candidate state-space structures is scored on every observation
//! by the negative log innovation likelihood of a particle belief. The active
//! structure changes only when another candidate's windowed score beats it by
//! more than a hysteresis margin, and the belief is advanced under the
//! committed structure alone. Fixed-structure filters and a particle IMM
//! baseline share the same primitives, and an exact discrete-HMM oracle backs
//! the property checks.

pub mod bench;
pub mod cf;
pub mod config;
pub mod error;
pub mod imm;
pub mod models;
pub mod oracle;
pub mod pf;
pub mod records;
pub mod report;
pub mod rng;
pub mod ssm;
pub mod verify;

pub use bench::{monte_carlo, run_method, MethodId, MonteCarloOutput, RunResult, Summary, SummaryRow};
pub use cf::{cf_step, CfConfig, CfState};
pub use error::{Error, Result};
pub use imm::{imm_step, ImmConfig, ImmState};
pub use models::{build_scenario, Scenario, ScenarioName, ScenarioParams};
pub use pf::pf_step;
pub use rng::{Purpose, RngStreams, StreamKey};
pub use ssm::{Belief, ModelBank, StateVec, StructureId};
